//! Event-driven simulation of the perturbed random walk and the branching
//! tree it generates.
//!
//! Birth times of one individual's children are `T_k = S_{k-1} + eta_k`
//! shifted by the parent's birth time. Since `T_k >= S_{k-1}` and both
//! steps are a.s. positive, generating children while the parent-local
//! walk satisfies `S_{k-1} <= remaining horizon` is exact: no truncation
//! bias. The tree is traversed breadth first, one generation at a time,
//! keeping only birth-time vectors (counts need no ancestry). Child
//! sequences draw from the replicate's RNG stream in frontier order;
//! counts are enumeration-invariant, so the traversal order is an
//! implementation detail.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridFunction;
use crate::seeds::replicate_rng;
use crate::step_models::{JointStepModel, ModelError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("walk exceeded {0} steps before the horizon; near-zero xi mass?")]
    StepCapExceeded(u64),
    #[error("live individual count exceeded the cap of {0}")]
    FrontierCapExceeded(u64),
    #[error("polynomial centering requires E eta^(1/2) < infinity; use the integral centering")]
    PolynomialCenteringRejected,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runaway guards. Both default to 1e8 and fail loudly instead of
/// truncating silently.
#[derive(Clone, Copy, Debug)]
pub struct SimLimits {
    pub max_walk_steps: u64,
    pub max_individuals: u64,
}

impl Default for SimLimits {
    fn default() -> Self {
        Self { max_walk_steps: 100_000_000, max_individuals: 100_000_000 }
    }
}

/// One realization of the perturbed random walk up to a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedWalkRealization {
    /// `S_0 = 0` and every later partial sum `<= horizon`, strictly
    /// increasing.
    pub partial_sums: Vec<f64>,
    /// Birth times `T_k = S_{k-1} + eta_k` with `T_k <= horizon`.
    pub births: Vec<f64>,
}

impl PerturbedWalkRealization {
    /// First-passage count `nu(horizon) = #{k >= 0 : S_k <= horizon}`;
    /// dominates the birth count pathwise.
    pub fn first_passage_index(&self) -> usize {
        self.partial_sums.len()
    }
}

/// Simulate the walk and its births on `[0, horizon]`.
pub fn simulate_prw<R: Rng + ?Sized>(
    model: &JointStepModel,
    horizon: f64,
    rng: &mut R,
    limits: &SimLimits,
) -> Result<PerturbedWalkRealization, SimError> {
    assert!(horizon >= 0.0);
    let mut partial_sums = vec![0.0];
    let mut births = Vec::new();
    let mut s = 0.0;
    let mut steps = 0u64;
    while s <= horizon {
        steps += 1;
        if steps > limits.max_walk_steps {
            return Err(SimError::StepCapExceeded(limits.max_walk_steps));
        }
        let (xi, eta) = model.sample_step(rng);
        let birth = s + eta;
        if birth <= horizon {
            births.push(birth);
        }
        s += xi;
        if s <= horizon {
            partial_sums.push(s);
        }
    }
    Ok(PerturbedWalkRealization { partial_sums, births })
}

/// Children of one individual born at `birth`, appended to `out` as
/// absolute birth times `<= t`. Allocation-free inner loop of the tree
/// simulation.
fn spawn_children<R: Rng + ?Sized>(
    model: &JointStepModel,
    birth: f64,
    t: f64,
    out: &mut Vec<f64>,
    rng: &mut R,
    limits: &SimLimits,
) -> Result<(), SimError> {
    let rem = t - birth;
    let mut s = 0.0;
    let mut steps = 0u64;
    while s <= rem {
        steps += 1;
        if steps > limits.max_walk_steps {
            return Err(SimError::StepCapExceeded(limits.max_walk_steps));
        }
        let (xi, eta) = model.sample_step(rng);
        let b = s + eta;
        if b <= rem {
            out.push(birth + b);
        }
        s += xi;
    }
    Ok(())
}

/// All birth times per generation `1..=j_max`, one tree.
pub fn simulate_tree_births<R: Rng + ?Sized>(
    model: &JointStepModel,
    t: f64,
    j_max: u32,
    rng: &mut R,
    limits: &SimLimits,
) -> Result<Vec<Vec<f64>>, SimError> {
    assert!(j_max >= 1);
    let mut generations: Vec<Vec<f64>> = Vec::with_capacity(j_max as usize);
    let root = [0.0f64];
    for j in 0..j_max as usize {
        let parents: &[f64] = if j == 0 { &root } else { &generations[j - 1] };
        let mut next = Vec::new();
        for &b in parents {
            spawn_children(model, b, t, &mut next, rng, limits)?;
            if next.len() as u64 > limits.max_individuals {
                return Err(SimError::FrontierCapExceeded(limits.max_individuals));
            }
        }
        generations.push(next);
    }
    Ok(generations)
}

/// Generation counts `N_j(u_i t)` evaluated on one tree at fractions of
/// the horizon. Rows are nondecreasing in `i`, and counts at smaller
/// thresholds are restrictions of the same tree.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationCountPath {
    pub t: f64,
    pub fractions: Vec<f64>,
    /// `counts[j-1][i] = N_j(u_i t)`.
    pub counts: Vec<Vec<u64>>,
}

pub fn count_births(births: &[f64], thresholds: &[f64]) -> Vec<u64> {
    let mut buckets = vec![0u64; thresholds.len()];
    for &b in births {
        let idx = thresholds.partition_point(|&th| th < b);
        if idx < buckets.len() {
            buckets[idx] += 1;
        }
    }
    let mut acc = 0u64;
    for b in &mut buckets {
        acc += *b;
        *b = acc;
    }
    buckets
}

impl GenerationCountPath {
    pub fn from_births(t: f64, fractions: &[f64], generations: &[Vec<f64>]) -> Self {
        let thresholds: Vec<f64> = fractions.iter().map(|u| u * t).collect();
        let counts = generations
            .iter()
            .map(|g| count_births(g, &thresholds))
            .collect();
        GenerationCountPath { t, fractions: fractions.to_vec(), counts }
    }
}

/// Simulate one tree and tally generation counts against `u_i t`.
pub fn simulate_generations<R: Rng + ?Sized>(
    model: &JointStepModel,
    t: f64,
    j_max: u32,
    fractions: &[f64],
    rng: &mut R,
    limits: &SimLimits,
) -> Result<GenerationCountPath, SimError> {
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    assert!(fractions.iter().all(|u| (0.0..=1.0).contains(u)));
    let generations = simulate_tree_births(model, t, j_max, rng, limits)?;
    Ok(GenerationCountPath::from_births(t, fractions, &generations))
}

/// Trajectories `N_j(t_i) / t_i^j` along checkpoints of a single tree
/// (simulated once at the last checkpoint, counted at each earlier one, so
/// the values are pathwise nested).
pub fn slln_trajectory<R: Rng + ?Sized>(
    model: &JointStepModel,
    j_max: u32,
    checkpoints: &[f64],
    rng: &mut R,
    limits: &SimLimits,
) -> Result<Vec<Vec<f64>>, SimError> {
    assert!(!checkpoints.is_empty());
    assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    let t_end = *checkpoints.last().unwrap();
    let fractions: Vec<f64> = checkpoints.iter().map(|c| c / t_end).collect();
    let path = simulate_generations(model, t_end, j_max, &fractions, rng, limits)?;
    Ok(path
        .counts
        .iter()
        .enumerate()
        .map(|(jm1, row)| {
            row.iter()
                .zip(checkpoints)
                .map(|(&c, &t)| c as f64 / t.powi(jm1 as i32 + 1))
                .collect()
        })
        .collect())
}

/// How the normalized paths are centered.
#[derive(Clone, Copy, Debug)]
pub enum Centering<'a> {
    /// Mean-function grids `V_1..V_{j_max}`, evaluated at `u_i t`.
    GridMeans(&'a [GridFunction]),
    /// `(u t)^j / (j! m^j)`; valid only when `E eta^{1/2} < infinity`.
    Polynomial,
    /// Truncated-moment centering curves, one grid per generation.
    Integral(&'a [GridFunction]),
}

/// Normalized count paths `(N_j(u_i t) - center_j(u_i t)) / scale_j(t)`
/// with `scale_j(t) = sqrt(m^{-2j-1} s^2 t^{2j-1}) / (j-1)!`, plus the raw
/// counts. Replicates run in parallel on derived seeds and are stored by
/// index.
#[derive(Clone, Debug)]
pub struct FltPathSet {
    pub t: f64,
    pub fractions: Vec<f64>,
    /// `values[r][j-1][i]`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `counts[r][j-1][i]`.
    pub counts: Vec<Vec<Vec<u64>>>,
}

impl FltPathSet {
    /// Normalized marginal of generation `j` at fraction index `i`.
    pub fn marginal(&self, j: u32, i: usize) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| r[(j - 1) as usize][i])
            .collect()
    }

    /// Raw counts of generation `j` at fraction index `i`.
    pub fn raw_counts(&self, j: u32, i: usize) -> Vec<u64> {
        self.counts
            .iter()
            .map(|r| r[(j - 1) as usize][i])
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn flt_path_sample(
    model: &JointStepModel,
    t: f64,
    j_max: u32,
    fractions: &[f64],
    replicates: usize,
    seed: u64,
    centering: Centering<'_>,
    limits: &SimLimits,
) -> Result<FltPathSet, SimError> {
    let moments = model.moments();
    if matches!(centering, Centering::Polynomial) && !moments.eta_half_finite {
        return Err(SimError::PolynomialCenteringRejected);
    }
    let mut scales = Vec::with_capacity(j_max as usize);
    let mut centers = Vec::with_capacity(j_max as usize);
    for j in 1..=j_max {
        scales.push(moments.flt_scale(j, t)?);
        let row: Vec<f64> = fractions
            .iter()
            .map(|&u| match centering {
                Centering::GridMeans(grids) => grids[(j - 1) as usize].eval(u * t),
                Centering::Integral(grids) => grids[(j - 1) as usize].eval(u * t),
                Centering::Polynomial => {
                    (u * t).powi(j as i32) / (crate::numeric::factorial(j) * moments.m.powi(j as i32))
                }
            })
            .collect();
        centers.push(row);
    }

    let thresholds_sorted = fractions.windows(2).all(|w| w[0] <= w[1]);
    assert!(thresholds_sorted);

    type ReplicateSample = (Vec<Vec<f64>>, Vec<Vec<u64>>);
    let per_replicate: Result<Vec<ReplicateSample>, SimError> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let path = simulate_generations(model, t, j_max, fractions, &mut rng, limits)?;
            let values: Vec<Vec<f64>> = path
                .counts
                .iter()
                .enumerate()
                .map(|(jm1, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(i, &c)| (c as f64 - centers[jm1][i]) / scales[jm1])
                        .collect()
                })
                .collect();
            Ok((values, path.counts))
        })
        .collect();
    let per_replicate = per_replicate?;

    let mut values = Vec::with_capacity(replicates);
    let mut counts = Vec::with_capacity(replicates);
    for (v, c) in per_replicate {
        values.push(v);
        counts.push(c);
    }
    Ok(FltPathSet { t, fractions: fractions.to_vec(), values, counts })
}

/// `sup_{s <= t} (N(s) - V(s))^2` for one walk realization, where `N` is
/// the first-generation counting process of the sorted `births` and `V` a
/// grid mean function. Between consecutive jumps the deviation is
/// monotone, so the supremum is attained at jump times or endpoints.
pub fn sup_squared_deviation(births: &[f64], v: &GridFunction, t: f64) -> f64 {
    let mut sorted = births.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sup: f64 = 0.0;
    let mut n = 0.0f64;
    let mut prev_end: f64;
    // segment before the first birth: N = 0
    let first = sorted.first().copied().unwrap_or(t);
    sup = sup.max((n - v.eval(first)).powi(2));
    for (i, &b) in sorted.iter().enumerate() {
        n = (i + 1) as f64;
        sup = sup.max((n - v.eval(b)).powi(2));
        prev_end = sorted.get(i + 1).copied().unwrap_or(t).min(t);
        sup = sup.max((n - v.eval(prev_end)).powi(2));
    }
    sup
}

/// Convenience: mean generation counts at `u = 1` over replicates
/// (parallel, derived seeds), for cross-checks against the grid engine.
pub fn mean_counts(
    model: &JointStepModel,
    t: f64,
    j_max: u32,
    replicates: usize,
    seed: u64,
    limits: &SimLimits,
) -> Result<Vec<crate::stats::EstimateCI>, SimError> {
    let rows: Result<Vec<Vec<u64>>, SimError> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let path = simulate_generations(model, t, j_max, &[1.0], &mut rng, limits)?;
            Ok(path.counts.iter().map(|row| row[0]).collect())
        })
        .collect();
    let rows = rows?;
    Ok((0..j_max as usize)
        .map(|j| {
            let xs: Vec<f64> = rows.iter().map(|r| r[j] as f64).collect();
            crate::stats::mc_mean(&xs)
        })
        .collect())
}
