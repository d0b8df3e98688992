//! Limit objects of the functional limit theorem: Brownian motion and the
//! Riemann-Liouville processes `B_q(s) = integral of (s-y)^q dB(y)`.
//!
//! The exact finite-dimensional sampler is the statistical ground truth;
//! the pathwise integrator exists for path-level comparisons and inherits
//! an `O(step^2)` trapezoid bias.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::{binomial, factorial};
use crate::seeds::replicate_rng;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("covariance matrix is not positive semidefinite near index {0} (duplicate or inconsistent u points?)")]
    NearSingular(usize),
}

/// Covariance of `B_q` at `(u, v)`:
/// `integral from 0 to min(u,v) of (u-y)^q (v-y)^q dy`, in closed form via
/// the binomial expansion. Symmetric; `rl_covariance(q, u, u)` reduces to
/// `u^{2q+1} / (2q+1)`.
pub fn rl_covariance(q: u32, u: f64, v: f64) -> f64 {
    assert!(u >= 0.0 && v >= 0.0);
    let w = u.min(v);
    let d = (u - v).abs();
    if w == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..=q {
        let dp = if q == i { 1.0 } else { d.powi((q - i) as i32) };
        acc += binomial(q, i) * dp * w.powi((q + i + 1) as i32) / (q + i + 1) as f64;
    }
    acc
}

/// Sampled paths of `B_q` on a uniform grid in the dimensionless time `u`.
#[derive(Clone, Debug)]
pub struct GaussianPathSet {
    pub step: f64,
    pub q: u32,
    /// replicate-major: `paths[r][k]` is the value at `u = k * step`.
    pub paths: Vec<Vec<f64>>,
}

impl GaussianPathSet {
    pub fn points(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }

    /// Index of a grid time, which must sit on the grid.
    pub fn index_of(&self, u: f64) -> usize {
        let k = (u / self.step).round();
        debug_assert!((u - k * self.step).abs() <= 1e-9 * (1.0 + u));
        k as usize
    }

    /// Values of all paths at one grid time.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k]).collect()
    }
}

/// Standard Brownian motion on `[0, u_max]`: independent Gaussian
/// increments of variance `step`, one derived seed per replicate.
pub fn sample_bm(step: f64, u_max: f64, replicates: usize, seed: u64) -> GaussianPathSet {
    assert!(step > 0.0 && u_max > 0.0);
    let n = (u_max / step).round() as usize;
    let sd = step.sqrt();
    let paths: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut path = Vec::with_capacity(n + 1);
            let mut cur = 0.0;
            path.push(cur);
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                cur += sd * z;
                path.push(cur);
            }
            path
        })
        .collect();
    GaussianPathSet { step, q: 0, paths }
}

/// Pathwise `B_q` from Brownian paths: `q` iterated cumulative trapezoid
/// integrations scaled by `q!`.
pub fn integrate_rl(bm: &GaussianPathSet, q: u32) -> GaussianPathSet {
    assert!(q >= 1);
    assert_eq!(bm.q, 0, "integrate_rl expects Brownian input paths");
    let paths: Vec<Vec<f64>> = bm
        .paths
        .par_iter()
        .map(|p| {
            let mut cur = p.clone();
            for _ in 0..q {
                cur = cumtrapz(&cur, bm.step);
            }
            let scale = factorial(q);
            for v in &mut cur {
                *v *= scale;
            }
            cur
        })
        .collect();
    GaussianPathSet { step: bm.step, q, paths }
}

fn cumtrapz(p: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..p.len() {
        acc += 0.5 * step * (p[k - 1] + p[k]);
        out.push(acc);
    }
    out
}

/// Exact draws of `(B_q(u_1), ..., B_q(u_d))` through a semidefinite
/// Cholesky factorization of the closed-form covariance.
pub fn fdd_sample(
    q: u32,
    u_points: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, GaussianError> {
    let d = u_points.len();
    let mut cov = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            cov[a][b] = rl_covariance(q, u_points[a], u_points[b]);
        }
    }
    let l = psd_cholesky(&cov)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d)
                .map(|a| (0..=a).map(|b| l[a][b] * z[b]).sum())
                .collect()
        })
        .collect())
}

/// Cholesky for positive semidefinite matrices: a vanishing pivot is
/// accepted only when the entire remaining column vanishes with it
/// (coordinates that are a.s. zero or exact duplicates); anything else is
/// reported as near-singular.
#[allow(clippy::needless_range_loop)] // indexed form mirrors the factorization
fn psd_cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GaussianError> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;
    let mut l = vec![vec![0.0; n]; n];
    for k in 0..n {
        let mut d = a[k][k];
        for j in 0..k {
            d -= l[k][j] * l[k][j];
        }
        if d > tol {
            l[k][k] = d.sqrt();
            for i in k + 1..n {
                let mut s = a[i][k];
                for j in 0..k {
                    s -= l[i][j] * l[k][j];
                }
                l[i][k] = s / l[k][k];
            }
        } else if d > -tol {
            l[k][k] = 0.0;
            for i in k + 1..n {
                let mut s = a[i][k];
                for j in 0..k {
                    s -= l[i][j] * l[k][j];
                }
                if s.abs() > 1e-8 * scale {
                    return Err(GaussianError::NearSingular(k));
                }
                l[i][k] = 0.0;
            }
        } else {
            return Err(GaussianError::NearSingular(k));
        }
    }
    Ok(l)
}
