//! Deterministic grid engine: right-continuous nondecreasing functions
//! sampled on a uniform grid, Stieltjes convolutions against their
//! increment measures, the renewal equation, convolution powers, key
//! renewal integrals, second moments, variance curves and bound audits.

mod bounds;
mod convolve;
mod dri;
mod renewal;
mod variance;

pub use bounds::{
    audit_convolution_lower, audit_heavy_tail_envelope, audit_lorden, audit_mean_lorden,
    BoundAudit, HeavyTailEnvelope,
};
pub use convolve::stieltjes_convolution;
pub use dri::{dri_check, DriFunction, DriReport};
pub use renewal::{
    blackwell_increment, centering_integral, convolution_power, convolution_powers,
    discretize_cdf, key_renewal_integral, mean_function, renewal_function, shifted_renewal,
    weighted_tail_integral, BlackwellCurves, KeyRenewalCurves, WeightedTailCurves,
};
pub use variance::{second_moment_sum, variance_numeric, VarianceCurves};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid step must be positive, got {0}")]
    BadStep(f64),
    #[error("grid needs at least two nodes")]
    TooShort,
    #[error("values are not {0} within tolerance at index {1}")]
    ShapeViolation(&'static str, usize),
    #[error("grids must share step and length (h {h_a} vs {h_b}, len {len_a} vs {len_b})")]
    Mismatch { h_a: f64, h_b: f64, len_a: usize, len_b: usize },
    #[error("entire step mass lies below the grid resolution (F(h) = 1)")]
    MassBelowResolution,
    #[error("lattice atom at {atom} is not aligned with the grid step {h}")]
    LatticeMisaligned { atom: f64, h: f64 },
    #[error("convolution accumulated a non-finite value at index {0}")]
    AccumulationOverflow(usize),
    #[error("function failed the direct Riemann integrability check: {0}")]
    NotDirectlyRiemannIntegrable(String),
    #[error("{0} is required for this operation")]
    PreconditionViolated(&'static str),
    #[error("variance curve dipped to {value} at t = {t}, beyond the error budget {budget}")]
    NegativeVariance { value: f64, t: f64, budget: f64 },
}

/// Where increment mass of a discretized measure sits.
///
/// Continuous laws put the mass of `((i-1)h, ih]` at the cell midpoint
/// (with linear interpolation of the partner function), which cancels the
/// leading one-sided bias of endpoint rules. Lattice laws put atoms
/// exactly on grid nodes so lattice identities stay integer-exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassRule {
    Midpoint,
    Node,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Cdf,
    Renewal,
    MeanFunction,
    Plain,
}

/// A function sampled at `k * h` for `k = 0..=K`.
///
/// Kinds `cdf`, `renewal` and `mean_function` are nondecreasing carriers of
/// distribution functions, the renewal function and the mean functions
/// `V_j`; `plain` carries derived curves (integrals, increments, variance
/// curves) with no shape constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    h: f64,
    values: Vec<f64>,
    kind: GridKind,
    mass_rule: MassRule,
}

/// Derived curves share the representation of measures; the alias marks
/// intent at API boundaries.
pub type GridFunction = GridMeasure;

const SHAPE_TOL: f64 = 1e-9;

impl GridMeasure {
    pub fn new(
        h: f64,
        values: Vec<f64>,
        kind: GridKind,
        mass_rule: MassRule,
    ) -> Result<Self, GridError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::BadStep(h));
        }
        if values.len() < 2 {
            return Err(GridError::TooShort);
        }
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        match kind {
            GridKind::Cdf | GridKind::Renewal | GridKind::MeanFunction => {
                for i in 1..values.len() {
                    if values[i] < values[i - 1] - SHAPE_TOL * scale {
                        return Err(GridError::ShapeViolation("nondecreasing", i));
                    }
                }
                if kind == GridKind::Cdf {
                    for (i, v) in values.iter().enumerate() {
                        if *v < -SHAPE_TOL || *v > 1.0 + SHAPE_TOL {
                            return Err(GridError::ShapeViolation("within [0, 1]", i));
                        }
                    }
                }
                if kind == GridKind::Renewal && values[0] < 1.0 - SHAPE_TOL {
                    return Err(GridError::ShapeViolation("at least 1 at the origin", 0));
                }
            }
            GridKind::Plain => {}
        }
        Ok(Self { h, values, kind, mass_rule })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_max(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn mass_rule(&self) -> MassRule {
        self.mass_rule
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `k` (no interpolation).
    pub fn at_index(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Node index of time `t`, requiring `t` to sit on the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = (t / self.h).round();
        debug_assert!((t - k * self.h).abs() <= 1e-9 * self.h.max(t.abs()));
        k as usize
    }

    /// Evaluate at arbitrary `t`: 0 left of the origin, clamped at the top
    /// end, linear interpolation between nodes for midpoint-rule grids and
    /// a right-continuous step for node-rule (lattice) grids.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let x = t / self.h;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        match self.mass_rule {
            MassRule::Node => {
                // nudge fp-adjacent node hits onto the node
                let r = x.round();
                if (x - r).abs() <= 1e-9 * (1.0 + x) {
                    self.values[r as usize]
                } else {
                    self.values[k]
                }
            }
            MassRule::Midpoint => {
                let w = x - k as f64;
                self.values[k] * (1.0 - w) + self.values[k + 1] * w
            }
        }
    }

    /// Increments `v_i - v_{i-1}` for `i = 1..K`; index 0 carries the atom
    /// at the origin (`v_0`).
    pub fn increments(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        out.push(self.values[0]);
        for i in 1..self.values.len() {
            out.push(self.values[i] - self.values[i - 1]);
        }
        out
    }

    /// Pointwise map, downgrading the kind to `plain`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridMeasure {
            h: self.h,
            values: self.values.iter().map(|&v| f(v)).collect(),
            kind: GridKind::Plain,
            mass_rule: self.mass_rule,
        }
    }

    /// Replace the kind tag (validating the new shape).
    pub fn with_kind(&self, kind: GridKind) -> Result<GridMeasure, GridError> {
        GridMeasure::new(self.h, self.values.clone(), kind, self.mass_rule)
    }

    pub(crate) fn same_grid(&self, other: &GridMeasure) -> Result<(), GridError> {
        if self.h == other.h && self.values.len() == other.values.len() {
            Ok(())
        } else {
            Err(GridError::Mismatch {
                h_a: self.h,
                h_b: other.h,
                len_a: self.values.len(),
                len_b: other.values.len(),
            })
        }
    }

    pub(crate) fn from_parts(
        h: f64,
        values: Vec<f64>,
        kind: GridKind,
        mass_rule: MassRule,
    ) -> GridMeasure {
        GridMeasure { h, values, kind, mass_rule }
    }
}

/// JSON envelope; `t_max` is stored redundantly and checked on read.
#[derive(Serialize, Deserialize)]
struct Envelope {
    h: f64,
    t_max: f64,
    kind: GridKind,
    node_mass: bool,
    values: Vec<f64>,
}

impl Serialize for GridMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Envelope {
            h: self.h,
            t_max: self.t_max(),
            kind: self.kind,
            node_mass: self.mass_rule == MassRule::Node,
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let env = Envelope::deserialize(d)?;
        let rule = if env.node_mass { MassRule::Node } else { MassRule::Midpoint };
        let grid = GridMeasure::new(env.h, env.values, env.kind, rule)
            .map_err(serde::de::Error::custom)?;
        let expected = grid.t_max();
        if (env.t_max - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(serde::de::Error::custom(format!(
                "t_max {} does not match h * (len - 1) = {}",
                env.t_max, expected
            )));
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_enforces_shape() {
        assert!(GridMeasure::new(
            0.5,
            vec![0.0, 0.4, 0.3],
            GridKind::Cdf,
            MassRule::Midpoint
        )
        .is_err());
        assert!(GridMeasure::new(
            0.5,
            vec![0.0, 0.4, 1.2],
            GridKind::Cdf,
            MassRule::Midpoint
        )
        .is_err());
        assert!(GridMeasure::new(
            0.5,
            vec![0.5, 0.8, 1.0],
            GridKind::Renewal,
            MassRule::Midpoint
        )
        .is_err());
        assert!(GridMeasure::new(
            0.5,
            vec![1.0, 0.4, 0.3],
            GridKind::Plain,
            MassRule::Midpoint
        )
        .is_ok());
    }

    #[test]
    fn eval_interpolates_and_clamps() {
        let g = GridMeasure::new(
            1.0,
            vec![0.0, 2.0, 4.0],
            GridKind::Plain,
            MassRule::Midpoint,
        )
        .unwrap();
        assert_eq!(g.eval(-1.0), 0.0);
        assert_eq!(g.eval(0.5), 1.0);
        assert_eq!(g.eval(2.0), 4.0);
        assert_eq!(g.eval(5.0), 4.0);

        let step = GridMeasure::new(
            1.0,
            vec![0.0, 2.0, 4.0],
            GridKind::Plain,
            MassRule::Node,
        )
        .unwrap();
        assert_eq!(step.eval(0.5), 0.0);
        assert_eq!(step.eval(1.0), 2.0);
        assert_eq!(step.eval(1.9), 2.0);
        // fp-adjacent node hits snap onto the node
        assert_eq!(step.eval(2.0 - 1e-13), 4.0);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let g = GridMeasure::new(
            0.1,
            vec![0.0, 0.3333333333333333, 1.0 / 3.0 + 0.1, 0.9999999999],
            GridKind::MeanFunction,
            MassRule::Midpoint,
        )
        .unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: GridMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        for (a, b) in g.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
