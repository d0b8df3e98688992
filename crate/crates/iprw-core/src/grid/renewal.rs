//! Discretized renewal machinery: CDF grids, the renewal function, mean
//! functions, convolution powers, key renewal integrals and the weighted
//! tail expansion.

use super::convolve::{stieltjes_convolution, stieltjes_convolution_fn};
use super::dri::{dri_check, DriFunction};
use super::{GridError, GridFunction, GridKind, GridMeasure, MassRule};
use crate::numeric::{factorial, KahanSum};
use crate::step_models::StepLaw;

/// Exact CDF of `law` sampled at `k h` for `k h <= t_max`.
///
/// Lattice laws (deterministic, discrete) must have every atom on a grid
/// node; their grids use the node mass rule so downstream convolutions stay
/// integer-exact. Continuous laws use the midpoint rule.
pub fn discretize_cdf(law: &StepLaw, h: f64, t_max: f64) -> Result<GridMeasure, GridError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GridError::BadStep(h));
    }
    let n = (t_max / h).round() as usize;
    if n < 1 {
        return Err(GridError::TooShort);
    }
    match law.atoms() {
        Some(atoms) => {
            for &(atom, _) in &atoms {
                let k = (atom / h).round();
                if (atom - k * h).abs() > 1e-9 * atom.max(h) {
                    return Err(GridError::LatticeMisaligned { atom, h });
                }
            }
            let tol = 1e-6 * h;
            let values: Vec<f64> = (0..=n)
                .map(|k| {
                    let t = k as f64 * h;
                    atoms
                        .iter()
                        .take_while(|(a, _)| *a <= t + tol)
                        .map(|(_, p)| p)
                        .sum::<f64>()
                        .min(1.0)
                })
                .collect();
            GridMeasure::new(h, values, GridKind::Cdf, MassRule::Node)
        }
        None => {
            let values: Vec<f64> = (0..=n).map(|k| law.cdf(k as f64 * h)).collect();
            GridMeasure::new(h, values, GridKind::Cdf, MassRule::Midpoint)
        }
    }
}

/// Solve the discretized renewal equation
/// `U(kh) = 1 + sum_{i=1}^{k} U(kh - y_i) dF_i`
/// with the mass `dF_i` of cell `i` placed per the grid's mass rule.
///
/// Under the midpoint rule the `i = 1` term references `U(kh)` through the
/// interpolated value at `(k - 1/2) h`, so each step solves a scalar linear
/// equation. The scheme's bias behaves like an `O(h^2)` mass transport
/// per cell and accumulates linearly in `t`.
pub fn renewal_function(f: &GridMeasure) -> Result<GridMeasure, GridError> {
    if f.kind() != GridKind::Cdf || f.at_index(0) != 0.0 {
        return Err(GridError::PreconditionViolated("a cdf grid with F(0) = 0"));
    }
    let df = f.increments();
    let n = f.len();
    let mut u = vec![0.0f64; n];
    u[0] = 1.0;
    match f.mass_rule() {
        MassRule::Node => {
            for k in 1..n {
                let mut acc = KahanSum::new();
                acc.add(1.0);
                for i in 1..=k {
                    acc.add(df[i] * u[k - i]);
                }
                u[k] = acc.value();
            }
        }
        MassRule::Midpoint => {
            if f.at_index(1) >= 1.0 - 1e-12 {
                return Err(GridError::MassBelowResolution);
            }
            let denom = 1.0 - 0.5 * df[1];
            for k in 1..n {
                let mut acc = KahanSum::new();
                acc.add(1.0);
                acc.add(0.5 * df[1] * u[k - 1]);
                for i in 2..=k {
                    acc.add(df[i] * 0.5 * (u[k - i] + u[k - i + 1]));
                }
                u[k] = acc.value() / denom;
            }
        }
    }
    if let Some(bad) = u.iter().position(|v| !v.is_finite()) {
        return Err(GridError::AccumulationOverflow(bad));
    }
    GridMeasure::new(f.h(), u, GridKind::Renewal, f.mass_rule())
}

/// `U(t) - 1`, the expected number of strictly positive walk points in
/// `[0, t]`; the measure integrated against in the second-moment engine.
pub fn shifted_renewal(u: &GridMeasure) -> GridMeasure {
    GridMeasure::from_parts(
        u.h(),
        u.values().iter().map(|v| v - 1.0).collect(),
        GridKind::MeanFunction,
        u.mass_rule(),
    )
}

/// Mean function `V(t) = integral of G(t - y) dU(y)`.
///
/// When `G` is a lattice CDF the integral is taken against `dG` instead
/// (the two orders agree exactly), so deterministic shifts of `U` come out
/// node-exact.
pub fn mean_function(u: &GridMeasure, g: &GridMeasure) -> Result<GridMeasure, GridError> {
    u.same_grid(g)?;
    if g.kind() != GridKind::Cdf {
        return Err(GridError::PreconditionViolated("a cdf grid for eta"));
    }
    let values = if g.mass_rule() == MassRule::Node && u.mass_rule() == MassRule::Midpoint {
        stieltjes_convolution(u.values(), g)?
    } else {
        stieltjes_convolution(g.values(), u)?
    };
    let rule = if u.mass_rule() == MassRule::Node && g.mass_rule() == MassRule::Node {
        MassRule::Node
    } else {
        MassRule::Midpoint
    };
    GridMeasure::new(u.h(), values, GridKind::MeanFunction, rule)
}

/// All convolution powers `V_1 = V, V_2 = V * dV, ..., V_j`.
pub fn convolution_powers(v: &GridMeasure, j: u32) -> Result<Vec<GridMeasure>, GridError> {
    assert!(j >= 1);
    let mut out = Vec::with_capacity(j as usize);
    out.push(v.clone());
    for _ in 2..=j {
        let prev = out.last().unwrap();
        let values = stieltjes_convolution(prev.values(), v)?;
        out.push(GridMeasure::new(v.h(), values, v.kind(), v.mass_rule())?);
    }
    Ok(out)
}

/// The `j`-fold convolution power alone.
pub fn convolution_power(v: &GridMeasure, j: u32) -> Result<GridMeasure, GridError> {
    Ok(convolution_powers(v, j)?.pop().unwrap())
}

pub struct BlackwellCurves {
    /// `V_j(t + h0) - V_j(t)` for grid `t <= t_max - h0`.
    pub increment: GridFunction,
    /// `h0 t^{j-1} / ((j-1)! m^j)` on the same nodes.
    pub theory: GridFunction,
}

/// Increments of `V_j` over a fixed window `h0` (a grid multiple), with the
/// polynomially scaled Blackwell limit curve alongside.
pub fn blackwell_increment(
    vj: &GridMeasure,
    h0: f64,
    j: u32,
    m: f64,
) -> Result<BlackwellCurves, GridError> {
    let steps = (h0 / vj.h()).round();
    if (h0 - steps * vj.h()).abs() > 1e-9 * h0 || steps < 1.0 {
        return Err(GridError::PreconditionViolated("h0 must be a grid multiple"));
    }
    let s = steps as usize;
    let n = vj.len() - s;
    let inc: Vec<f64> = (0..n).map(|k| vj.at_index(k + s) - vj.at_index(k)).collect();
    let norm = factorial(j - 1) * m.powi(j as i32);
    let theory: Vec<f64> = (0..n)
        .map(|k| h0 * (k as f64 * vj.h()).powi(j as i32 - 1) / norm)
        .collect();
    Ok(BlackwellCurves {
        increment: GridMeasure::from_parts(vj.h(), inc, GridKind::Plain, vj.mass_rule()),
        theory: GridMeasure::from_parts(vj.h(), theory, GridKind::Plain, vj.mass_rule()),
    })
}

pub struct KeyRenewalCurves {
    /// `integral over [0, t] of f(t - y) dV_j(y)`.
    pub integral: GridFunction,
    /// `(integral of f / m) V_{j-1}(t)`: the middle equivalence.
    pub equivalent_mean: GridFunction,
    /// `integral of f * t^{j-1} / ((j-1)! m^j)`: the polynomial limit.
    pub polynomial: GridFunction,
}

/// Key renewal integral of a directly Riemann integrable `f` against
/// `dV_j`, with both theoretical comparison curves.
pub fn key_renewal_integral(
    f: &DriFunction,
    vj: &GridMeasure,
    vjm1: &GridMeasure,
    j: u32,
    m: f64,
) -> Result<KeyRenewalCurves, GridError> {
    let report = dri_check(f, 1.0);
    if !report.pass {
        return Err(GridError::NotDirectlyRiemannIntegrable(
            report.reason.unwrap_or_else(|| "divergent Riemann sums".into()),
        ));
    }
    vj.same_grid(vjm1)?;
    let values = stieltjes_convolution_fn(|y| f.eval(y), vj)?;
    let mass = f.integral();
    let equivalent: Vec<f64> = vjm1.values().iter().map(|v| mass / m * v).collect();
    let norm = factorial(j - 1) * m.powi(j as i32);
    let poly: Vec<f64> = (0..vj.len())
        .map(|k| mass * (k as f64 * vj.h()).powi(j as i32 - 1) / norm)
        .collect();
    Ok(KeyRenewalCurves {
        integral: GridMeasure::from_parts(vj.h(), values, GridKind::Plain, vj.mass_rule()),
        equivalent_mean: GridMeasure::from_parts(
            vj.h(),
            equivalent,
            GridKind::Plain,
            vj.mass_rule(),
        ),
        polynomial: GridMeasure::from_parts(vj.h(), poly, GridKind::Plain, vj.mass_rule()),
    })
}

pub struct WeightedTailCurves {
    /// `integral over [0, t] of (t - y)^j d(U - 1)(y)`.
    pub integral: GridFunction,
    /// `(integral - t^{j+1}/((j+1) m) - (b_U - 1) t^j) / t^j`; tends to 0.
    pub residual: GridFunction,
}

/// Weighted tail integral of `(t - y)^j` against the shifted renewal
/// measure, with the residual of its two-term expansion.
pub fn weighted_tail_integral(
    u_tilde: &GridMeasure,
    j: u32,
    m: f64,
    b_u: f64,
) -> Result<WeightedTailCurves, GridError> {
    let values = stieltjes_convolution_fn(|y| y.powi(j as i32), u_tilde)?;
    let h = u_tilde.h();
    let residual: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if k == 0 {
                0.0
            } else {
                let t = k as f64 * h;
                let lead = t.powi(j as i32 + 1) / ((j + 1) as f64 * m);
                let second = (b_u - 1.0) * t.powi(j as i32);
                (v - lead - second) / t.powi(j as i32)
            }
        })
        .collect();
    Ok(WeightedTailCurves {
        integral: GridMeasure::from_parts(h, values, GridKind::Plain, u_tilde.mass_rule()),
        residual: GridMeasure::from_parts(h, residual, GridKind::Plain, u_tilde.mass_rule()),
    })
}

/// Centering curve `E (t - R_j)^j 1{R_j <= t} / (j! m^j)` where
/// `R_j = eta_1 + ... + eta_j`: the `j`-fold self-convolution of `G`
/// integrated cumulatively `j` times and divided by `m^j`.
///
/// Node-rule (lattice) grids integrate by left rectangles, which is exact
/// for right-continuous step functions; midpoint grids use the trapezoid
/// rule.
pub fn centering_integral(g: &GridMeasure, j: u32, m: f64) -> Result<GridFunction, GridError> {
    if g.kind() != GridKind::Cdf {
        return Err(GridError::PreconditionViolated("a cdf grid for eta"));
    }
    assert!(j >= 1);
    let gj = convolution_power(g, j)?;
    let mut cur = gj.values().to_vec();
    for _ in 0..j {
        cur = cumulative_integral(&cur, g.h(), g.mass_rule());
    }
    let scale = m.powi(j as i32);
    let values: Vec<f64> = cur.iter().map(|v| v / scale).collect();
    Ok(GridMeasure::from_parts(g.h(), values, GridKind::Plain, g.mass_rule()))
}

fn cumulative_integral(w: &[f64], h: f64, rule: MassRule) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    let mut acc = KahanSum::new();
    out.push(0.0);
    for k in 1..w.len() {
        match rule {
            MassRule::Node => acc.add(h * w[k - 1]),
            MassRule::Midpoint => acc.add(0.5 * h * (w[k - 1] + w[k])),
        }
        out.push(acc.value());
    }
    out
}
