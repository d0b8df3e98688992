//! Stieltjes convolution of a grid function against the increment measure
//! of a grid measure.

use rayon::prelude::*;

use super::{GridError, GridMeasure, MassRule};
use crate::numeric::KahanSum;

/// `out[k] = integral over [0, kh] of A(kh - y) dB(y)`.
///
/// The increment of `B` over `((i-1)h, ih]` is placed at the cell midpoint
/// with `A` linearly interpolated there (midpoint rule, continuous laws) or
/// at the node `ih` with `A` read off the grid (node rule, lattice laws).
/// The atom `B(0)` contributes `B(0) * A(kh)`. Each output point is an
/// independent compensated sum, so rows can be computed in parallel without
/// affecting the result.
pub fn stieltjes_convolution(a: &[f64], b: &GridMeasure) -> Result<Vec<f64>, GridError> {
    if a.len() != b.len() {
        return Err(GridError::Mismatch {
            h_a: b.h(),
            h_b: b.h(),
            len_a: a.len(),
            len_b: b.len(),
        });
    }
    let db = b.increments();
    let atom = db[0];
    let n = a.len();

    // midpoint values of A, used only under the midpoint rule
    let a_mid: Vec<f64> = match b.mass_rule() {
        MassRule::Midpoint => (0..n - 1).map(|j| 0.5 * (a[j] + a[j + 1])).collect(),
        MassRule::Node => Vec::new(),
    };

    let row = |k: usize| -> f64 {
        let mut acc = KahanSum::new();
        acc.add(atom * a[k]);
        match b.mass_rule() {
            MassRule::Node => {
                for i in 1..=k {
                    acc.add(db[i] * a[k - i]);
                }
            }
            MassRule::Midpoint => {
                for i in 1..=k {
                    acc.add(db[i] * a_mid[k - i]);
                }
            }
        }
        acc.value()
    };

    let out: Vec<f64> = if n >= 2048 {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };

    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(GridError::AccumulationOverflow(bad));
    }
    Ok(out)
}

/// Convolution against `dB` where the integrand is given pointwise as a
/// closed-form function instead of grid samples; the midpoint rule then
/// evaluates it exactly at `(k - i + 1/2) h` with no interpolation error.
pub(crate) fn stieltjes_convolution_fn(
    f: impl Fn(f64) -> f64 + Sync,
    b: &GridMeasure,
) -> Result<Vec<f64>, GridError> {
    let db = b.increments();
    let atom = db[0];
    let n = b.len();
    let h = b.h();

    // f sampled where the rule needs it: nodes, or cell midpoints
    let samples: Vec<f64> = match b.mass_rule() {
        MassRule::Node => (0..n).map(|j| f(j as f64 * h)).collect(),
        MassRule::Midpoint => (0..n).map(|j| f((j as f64 + 0.5) * h)).collect(),
    };
    let at_node: Vec<f64> = match b.mass_rule() {
        MassRule::Node => samples.clone(),
        MassRule::Midpoint => (0..n).map(|j| f(j as f64 * h)).collect(),
    };

    let row = |k: usize| -> f64 {
        let mut acc = KahanSum::new();
        acc.add(atom * at_node[k]);
        for i in 1..=k {
            acc.add(db[i] * samples[k - i]);
        }
        acc.value()
    };

    let out: Vec<f64> = if n >= 2048 {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };

    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(GridError::AccumulationOverflow(bad));
    }
    Ok(out)
}
