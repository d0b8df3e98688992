//! Step laws and the joint law of one step `(xi, eta)`.
//!
//! `xi` drives the underlying random walk `S_k = xi_1 + ... + xi_k` and
//! `eta` perturbs birth times, `T_k = S_{k-1} + eta_k`. Both are strictly
//! positive. All moment-derived constants the theorems use (`m`, `s^2`,
//! `E xi^2`, `E eta`, the rate constant `b_V`, the variance constant and the
//! functional-limit scale) live here and are computed in closed form per
//! family, never by simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::numeric::{factorial, ln_factorial};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("uniform bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]")]
    BadUniformBounds { lo: f64, hi: f64 },
    #[error("lognormal sigma must be positive and mu finite")]
    BadLognormal,
    #[error("discrete probabilities sum to {sum}, expected 1 within 1e-12")]
    BadProbabilitySum { sum: f64 },
    #[error("discrete atoms must be strictly positive and strictly increasing")]
    BadAtoms,
    #[error("discrete support must be non-empty")]
    EmptySupport,
    #[error("{name} is not finite for this model")]
    InfiniteMoment { name: &'static str },
    #[error("step variance is zero; a nondegenerate xi is required")]
    DegenerateVariance,
}

/// Marginal law of one positive step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StepLaw {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Pareto { alpha: f64, scale: f64 },
    Deterministic { value: f64 },
    Discrete { support: Vec<(f64, f64)> },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositiveParameter { name, value })
    }
}

impl StepLaw {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            StepLaw::Exponential { rate } => require_positive("rate", *rate),
            StepLaw::Gamma { shape, rate } => {
                require_positive("shape", *shape)?;
                require_positive("rate", *rate)
            }
            StepLaw::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi {
                    Ok(())
                } else {
                    Err(ModelError::BadUniformBounds { lo: *lo, hi: *hi })
                }
            }
            StepLaw::Lognormal { mu, sigma } => {
                if mu.is_finite() && sigma.is_finite() && *sigma > 0.0 {
                    Ok(())
                } else {
                    Err(ModelError::BadLognormal)
                }
            }
            StepLaw::Pareto { alpha, scale } => {
                require_positive("alpha", *alpha)?;
                require_positive("scale", *scale)
            }
            StepLaw::Deterministic { value } => require_positive("value", *value),
            StepLaw::Discrete { support } => {
                if support.is_empty() {
                    return Err(ModelError::EmptySupport);
                }
                let mut prev = 0.0;
                let mut total = 0.0;
                for &(atom, prob) in support {
                    if !(atom.is_finite() && atom > 0.0 && atom > prev) {
                        return Err(ModelError::BadAtoms);
                    }
                    require_positive("probability", prob)?;
                    prev = atom;
                    total += prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(ModelError::BadProbabilitySum { sum: total });
                }
                Ok(())
            }
        }
    }

    /// P{X <= x}, right-continuous, exact per family.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            StepLaw::Exponential { rate } => -(-rate * x).exp_m1(),
            StepLaw::Gamma { shape, rate } => {
                if x == 0.0 {
                    0.0
                } else {
                    statrs::function::gamma::gamma_lr(*shape, rate * x)
                }
            }
            StepLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            StepLaw::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x.ln() - mu) / sigma;
                    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
                }
            }
            StepLaw::Pareto { alpha, scale } => {
                if x < *scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(*alpha)
                }
            }
            StepLaw::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            StepLaw::Discrete { support } => support
                .iter()
                .take_while(|(atom, _)| *atom <= x)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Generalized inverse of the CDF at `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u));
        match self {
            StepLaw::Exponential { rate } => -(-u).ln_1p() / rate,
            StepLaw::Gamma { shape, rate } => {
                let g = statrs::distribution::Gamma::new(*shape, *rate)
                    .expect("validated parameters");
                g.inverse_cdf(u)
            }
            StepLaw::Uniform { lo, hi } => lo + u * (hi - lo),
            StepLaw::Lognormal { mu, sigma } => {
                let n = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
                (mu + sigma * n.inverse_cdf(u)).exp()
            }
            StepLaw::Pareto { alpha, scale } => scale * (1.0 - u).powf(-1.0 / alpha),
            StepLaw::Deterministic { value } => *value,
            StepLaw::Discrete { support } => {
                let mut acc = 0.0;
                for &(atom, prob) in support {
                    acc += prob;
                    if u < acc {
                        return atom;
                    }
                }
                support.last().expect("non-empty support").0
            }
        }
    }

    /// Mean and second moment; infinite moments reported as +inf.
    fn mean_and_second_moment(&self) -> (f64, f64) {
        match self {
            StepLaw::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            StepLaw::Gamma { shape, rate } => {
                (shape / rate, shape * (shape + 1.0) / (rate * rate))
            }
            StepLaw::Uniform { lo, hi } => {
                ((lo + hi) / 2.0, (lo * lo + lo * hi + hi * hi) / 3.0)
            }
            StepLaw::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                ((mu + 0.5 * s2).exp(), (2.0 * mu + 2.0 * s2).exp())
            }
            StepLaw::Pareto { alpha, scale } => {
                let mean = if *alpha > 1.0 {
                    alpha * scale / (alpha - 1.0)
                } else {
                    f64::INFINITY
                };
                let second = if *alpha > 2.0 {
                    alpha * scale * scale / (alpha - 2.0)
                } else {
                    f64::INFINITY
                };
                (mean, second)
            }
            StepLaw::Deterministic { value } => (*value, value * value),
            StepLaw::Discrete { support } => {
                let mean = support.iter().map(|(a, p)| a * p).sum();
                let second = support.iter().map(|(a, p)| a * a * p).sum();
                (mean, second)
            }
        }
    }

    /// Span of the arithmetic lattice carrying the law, if any.
    pub fn lattice_span(&self) -> Option<f64> {
        match self {
            StepLaw::Deterministic { value } => Some(*value),
            StepLaw::Discrete { support } => {
                let atoms: Vec<f64> = support.iter().map(|(a, _)| *a).collect();
                let max = atoms.iter().cloned().fold(0.0, f64::max);
                let mut g = atoms[0];
                for &a in &atoms[1..] {
                    g = float_gcd(g, a);
                }
                let tol = 1e-9 * max;
                if g > tol && atoms.iter().all(|a| {
                    let k = (a / g).round();
                    (a - k * g).abs() <= tol
                }) {
                    Some(g)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Atoms with probabilities for lattice laws, None for continuous ones.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            StepLaw::Deterministic { value } => Some(vec![(*value, 1.0)]),
            StepLaw::Discrete { support } => Some(support.clone()),
            _ => None,
        }
    }

    /// E X^a finite?
    fn moment_finite(&self, a: f64) -> bool {
        match self {
            StepLaw::Pareto { alpha, .. } => a < *alpha,
            _ => true,
        }
    }
}

fn float_gcd(a: f64, b: f64) -> f64 {
    let tol = 1e-9 * a.max(b);
    let (mut a, mut b) = (a.max(b), a.min(b));
    while b > tol {
        let r = a % b;
        a = b;
        b = if r < tol || b - r < tol { 0.0 } else { r };
    }
    a
}

/// Joint law of `(xi, eta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "coupling", rename_all = "snake_case")]
pub enum JointStepModel {
    /// Independent components.
    Independent { xi: StepLaw, eta: StepLaw },
    /// `eta = xi` pathwise: birth times are the walk points themselves.
    Equal { xi: StepLaw },
    /// One uniform variate pushed through both quantile functions.
    Comonotone { xi: StepLaw, eta: StepLaw },
}

impl JointStepModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.xi_law().validate()?;
        self.eta_law().validate()
    }

    pub fn xi_law(&self) -> &StepLaw {
        match self {
            JointStepModel::Independent { xi, .. }
            | JointStepModel::Equal { xi }
            | JointStepModel::Comonotone { xi, .. } => xi,
        }
    }

    pub fn eta_law(&self) -> &StepLaw {
        match self {
            JointStepModel::Independent { eta, .. }
            | JointStepModel::Comonotone { eta, .. } => eta,
            JointStepModel::Equal { xi } => xi,
        }
    }

    pub fn is_equal_coupling(&self) -> bool {
        matches!(self, JointStepModel::Equal { .. })
    }

    /// One draw of `(xi, eta)` honoring the coupling.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JointStepModel::Independent { xi, eta } => {
                let u = positive_uniform(rng);
                let v = positive_uniform(rng);
                (xi.quantile(u), eta.quantile(v))
            }
            JointStepModel::Equal { xi } => {
                let x = xi.quantile(positive_uniform(rng));
                (x, x)
            }
            JointStepModel::Comonotone { xi, eta } => {
                let u = positive_uniform(rng);
                (xi.quantile(u), eta.quantile(u))
            }
        }
    }

    /// Closed-form moment summary; feeds every theorem constant.
    pub fn moments(&self) -> MomentSummary {
        let (m, m2) = self.xi_law().mean_and_second_moment();
        let s2 = if m.is_finite() && m2.is_finite() {
            m2 - m * m
        } else {
            f64::INFINITY
        };
        let eta = self.eta_law();
        let (eta_mean, _) = eta.mean_and_second_moment();
        MomentSummary {
            m,
            m2,
            s2,
            eta_mean,
            eta_half_finite: eta.moment_finite(0.5),
            eta_alpha: largest_tabulated_moment(eta),
            lattice: self.xi_law().lattice_span(),
        }
    }
}

/// Moment grid used to report the largest finite power moment of eta.
const MOMENT_TABLE: [f64; 14] = [
    0.1, 0.2, 0.25, 1.0 / 3.0, 0.4, 0.5, 2.0 / 3.0, 0.75, 0.9, 1.0, 1.25, 1.5, 1.75, 2.0,
];

fn largest_tabulated_moment(law: &StepLaw) -> f64 {
    MOMENT_TABLE
        .iter()
        .rev()
        .find(|&&a| law.moment_finite(a))
        .copied()
        .unwrap_or(0.0)
}

fn positive_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Moment summary of a joint model. `m`, `m2`, `s2` refer to `xi`;
/// `lattice` is the span of `xi` when it is lattice-supported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub m: f64,
    pub m2: f64,
    pub s2: f64,
    pub eta_mean: f64,
    pub eta_half_finite: bool,
    pub eta_alpha: f64,
    pub lattice: Option<f64>,
}

impl MomentSummary {
    pub fn is_nonlattice(&self) -> bool {
        self.lattice.is_none()
    }

    /// Rate constant `b_V = m^{-1} (E xi^2 / (2 m) - E eta)` of the
    /// second-order expansion of `V_j`.
    pub fn rate_constant_bv(&self) -> Result<f64, ModelError> {
        if !self.m2.is_finite() {
            return Err(ModelError::InfiniteMoment { name: "E xi^2" });
        }
        if !self.eta_mean.is_finite() {
            return Err(ModelError::InfiniteMoment { name: "E eta" });
        }
        Ok((self.m2 / (2.0 * self.m) - self.eta_mean) / self.m)
    }

    /// `b_U = E xi^2 / (2 m^2)`, the limit of `U(t) - t/m`.
    pub fn lorden_limit_bu(&self) -> Result<f64, ModelError> {
        if !self.m2.is_finite() {
            return Err(ModelError::InfiniteMoment { name: "E xi^2" });
        }
        Ok(self.m2 / (2.0 * self.m * self.m))
    }

    /// Lorden bound constant `c_U = E xi^2 / m^2`.
    pub fn lorden_bound_cu(&self) -> Result<f64, ModelError> {
        self.lorden_limit_bu().map(|b| 2.0 * b)
    }

    /// Leading constant of `Var N_j(t) / t^{2j-1}`:
    /// `s^2 / ((2j-1) ((j-1)!)^2 m^{2j+1})`.
    pub fn variance_constant(&self, j: u32) -> Result<f64, ModelError> {
        self.require_nondegenerate_variance()?;
        assert!(j >= 1, "generation index must be >= 1");
        if j <= 20 {
            let fac = factorial(j - 1);
            Ok(self.s2 / ((2 * j - 1) as f64 * fac * fac * self.m.powi(2 * j as i32 + 1)))
        } else {
            // log-space: the squared factorial overflows f64 long before
            // the ratio does.
            let ln = self.s2.ln()
                - ((2 * j - 1) as f64).ln()
                - 2.0 * ln_factorial(j - 1)
                - (2 * j + 1) as f64 * self.m.ln();
            Ok(ln.exp())
        }
    }

    /// Normalization `sqrt(m^{-2j-1} s^2 t^{2j-1}) / (j-1)!` of the
    /// functional limit theorem.
    pub fn flt_scale(&self, j: u32, t: f64) -> Result<f64, ModelError> {
        self.require_nondegenerate_variance()?;
        assert!(j >= 1 && t > 0.0);
        if j <= 20 {
            let var = self.m.powi(-(2 * j as i32) - 1) * self.s2 * t.powi(2 * j as i32 - 1);
            Ok(var.sqrt() / factorial(j - 1))
        } else {
            let ln = 0.5
                * (-((2 * j + 1) as f64) * self.m.ln()
                    + self.s2.ln()
                    + (2 * j - 1) as f64 * t.ln())
                - ln_factorial(j - 1);
            Ok(ln.exp())
        }
    }

    fn require_nondegenerate_variance(&self) -> Result<(), ModelError> {
        if !self.s2.is_finite() {
            return Err(ModelError::InfiniteMoment { name: "Var xi" });
        }
        if self.s2 <= 0.0 {
            return Err(ModelError::DegenerateVariance);
        }
        Ok(())
    }
}
