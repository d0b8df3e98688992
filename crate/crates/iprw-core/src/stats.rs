//! Monte Carlo estimators with standard errors, the Kolmogorov-Smirnov
//! test and a chi-square goodness-of-fit helper.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::seeds::{replicate_rng, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample contains a non-finite value at index {0}")]
    NonFiniteSample(usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
}

/// Point estimate with a standard error and a normal-approximation
/// confidence interval at `level` (default 0.99).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimateCI {
    pub point: f64,
    pub se: f64,
    pub replicates: usize,
    pub level: f64,
}

impl EstimateCI {
    pub fn new(point: f64, se: f64, replicates: usize) -> Self {
        Self { point, se, replicates, level: 0.99 }
    }

    pub fn interval(&self) -> (f64, f64) {
        let z = standard_normal_quantile(0.5 + self.level / 2.0);
        (self.point - z * self.se, self.point + z * self.se)
    }

    /// |point - target| measured in standard errors (infinite when se = 0
    /// and the target is missed).
    pub fn distance_in_se(&self, target: f64) -> f64 {
        let d = (self.point - target).abs();
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(p)
}

/// Mean of `replicates` draws of `sampler`, each on its own derived RNG
/// stream; deterministic given `seed` and independent of scheduling.
/// The standard error of a mean via the jackknife coincides with the
/// classical `sd / sqrt(n)`.
pub fn mc_estimate(
    sampler: impl Fn(&mut SimRng) -> f64 + Sync,
    replicates: usize,
    seed: u64,
) -> EstimateCI {
    assert!(replicates >= 100, "need at least 100 replicates");
    let draws: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            sampler(&mut rng)
        })
        .collect();
    mc_mean(&draws)
}

/// Mean with classical standard error.
pub fn mc_mean(samples: &[f64]) -> EstimateCI {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (n as f64 - 1.0);
    EstimateCI::new(mean, (var / n as f64).sqrt(), n)
}

/// Unbiased sample variance with a jackknife standard error, which needs
/// no fourth-moment plug-in. Leave-one-out variances come from running
/// sums in O(n).
pub fn mc_variance(samples: &[f64]) -> EstimateCI {
    let n = samples.len();
    assert!(n >= 3);
    let nf = n as f64;
    let s1: f64 = samples.iter().sum();
    let s2: f64 = samples.iter().map(|x| x * x).sum();
    let full = (s2 - s1 * s1 / nf) / (nf - 1.0);

    let loo: Vec<f64> = samples
        .iter()
        .map(|&x| {
            let s1i = s1 - x;
            let s2i = s2 - x * x;
            (s2i - s1i * s1i / (nf - 1.0)) / (nf - 2.0)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let se2 = (nf - 1.0) / nf
        * loo
            .iter()
            .map(|v| (v - loo_mean) * (v - loo_mean))
            .sum::<f64>();
    EstimateCI::new(full, se2.sqrt(), n)
}

/// Sample covariance with a jackknife standard error.
pub fn mc_covariance(xs: &[f64], ys: &[f64]) -> EstimateCI {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 3);
    let nf = n as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let full = (sxy - sx * sy / nf) / (nf - 1.0);

    let loo: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let sxi = sx - x;
            let syi = sy - y;
            let sxyi = sxy - x * y;
            (sxyi - sxi * syi / (nf - 1.0)) / (nf - 2.0)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let se2 = (nf - 1.0) / nf
        * loo
            .iter()
            .map(|v| (v - loo_mean) * (v - loo_mean))
            .sum::<f64>();
    EstimateCI::new(full, se2.sqrt(), n)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against a target CDF.
///
/// `D_n = sup |F_n - F|`; the p-value comes from the asymptotic Kolmogorov
/// series `2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)` truncated once terms drop
/// below 1e-12, with `lambda = sqrt(n) D_n`. Quote p only for n >= 1000.
pub fn ks_test(
    sample: &[f64],
    target_cdf: impl Fn(f64) -> f64,
) -> Result<KsResult, StatsError> {
    if let Some(bad) = sample.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteSample(bad));
    }
    if sample.len() < 10 {
        return Err(StatsError::TooFewObservations { needed: 10, got: sample.len() });
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = target_cdf(x);
        d = d.max(((i + 1) as f64 / nf - f).abs());
        d = d.max((f - i as f64 / nf).abs());
    }
    let lambda = nf.sqrt() * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(lambda), n })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..10_000 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square goodness of fit of observed counts against expected
/// counts (already scaled to the sample size). Bins with expected counts
/// below `min_expected` are merged into their right neighbour.
pub fn chi_square_gof(
    observed: &[f64],
    expected: &[f64],
    min_expected: f64,
) -> (f64, f64, usize) {
    assert_eq!(observed.len(), expected.len());
    let mut obs_m = Vec::new();
    let mut exp_m = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (o, e) in observed.iter().zip(expected) {
        acc_o += o;
        acc_e += e;
        if acc_e >= min_expected {
            obs_m.push(acc_o);
            exp_m.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let (Some(lo), Some(le)) = (obs_m.last_mut(), exp_m.last_mut()) {
            *lo += acc_o;
            *le += acc_e;
        } else {
            obs_m.push(acc_o);
            exp_m.push(acc_e);
        }
    }
    let stat: f64 = obs_m
        .iter()
        .zip(&exp_m)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs_m.len().saturating_sub(1).max(1);
    let p = statrs::function::gamma::gamma_ur(dof as f64 / 2.0, stat / 2.0);
    (stat, p, dof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_sampler_has_zero_se() {
        let est = mc_estimate(|_| 5.0, 200, 0);
        assert_eq!(est.point, 5.0);
        assert_eq!(est.se, 0.0);
        assert_eq!(est.distance_in_se(5.0), 0.0);
        assert!(est.distance_in_se(5.1).is_infinite());
    }

    fn poisson_count(rate_time: f64, rng: &mut SimRng) -> f64 {
        // exponential spacings until the budget is spent
        let mut s = 0.0;
        let mut n = 0.0;
        loop {
            let u: f64 = rng.random();
            s += -(1.0 - u).ln();
            if s > rate_time {
                return n;
            }
            n += 1.0;
        }
    }

    #[test]
    fn poisson_mean_and_variance_within_jackknife_bands() {
        let draws: Vec<f64> = (0..10_000)
            .map(|i| {
                let mut rng = replicate_rng(5, i);
                poisson_count(10.0, &mut rng)
            })
            .collect();
        let mean = mc_mean(&draws);
        assert!(mean.distance_in_se(10.0) < 3.0, "{mean:?}");
        let var = mc_variance(&draws);
        assert!(var.distance_in_se(10.0) < 3.0, "{var:?}");
    }

    #[test]
    fn covariance_estimator_on_correlated_pairs() {
        let mut rng = replicate_rng(6, 0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..20_000 {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            xs.push(a);
            ys.push(0.5 * a + b);
        }
        let cov = mc_covariance(&xs, &ys);
        assert!(cov.distance_in_se(0.5) < 3.0, "{cov:?}");
    }

    #[test]
    fn ks_self_test_and_power() {
        // drawn from the target: p should be comfortably above 0.01
        let sample: Vec<f64> = (0..10_000)
            .map(|i| {
                let mut rng = replicate_rng(7, i);
                rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let ok = ks_test(&sample, standard_normal_cdf).unwrap();
        assert!(ok.p_value > 0.01, "{ok:?}");

        // shifted by 0.5: decisively rejected
        let shifted: Vec<f64> = sample.iter().map(|x| x + 0.5).collect();
        let bad = ks_test(&shifted, standard_normal_cdf).unwrap();
        assert!(bad.p_value < 1e-6, "{bad:?}");
    }

    #[test]
    fn ks_p_roughly_uniform_under_null() {
        // fixed seed block: the asymptotic p rejects at the nominal rate
        let mut rejections = 0;
        let runs = 500;
        for r in 0..runs {
            let sample: Vec<f64> = (0..2000)
                .map(|i| {
                    let mut rng = replicate_rng(1000 + r, i);
                    rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            if ks_test(&sample, standard_normal_cdf).unwrap().p_value <= 0.01 {
                rejections += 1;
            }
        }
        // >= 99% of reruns keep p > 0.01
        assert!(rejections <= runs / 100, "{rejections} rejections in {runs}");
    }

    #[test]
    fn ks_degenerate_target_sees_the_full_jump() {
        let sample = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.5];
        let res = ks_test(&sample, |x| if x >= 10.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(res.statistic, 1.0);
    }

    #[test]
    fn ks_rejects_non_finite_input() {
        let sample = vec![0.0; 20].into_iter().chain([f64::NAN]).collect::<Vec<_>>();
        assert!(matches!(
            ks_test(&sample, standard_normal_cdf),
            Err(StatsError::NonFiniteSample(_))
        ));
    }

    #[test]
    fn chi_square_detects_fit_and_misfit() {
        // Poisson(5) histogram vs its own pmf
        let lambda = 5.0f64;
        let n = 10_000usize;
        let max_k = 30usize;
        let mut pmf = vec![0.0; max_k + 1];
        let mut p = (-lambda).exp();
        for (k, slot) in pmf.iter_mut().enumerate() {
            *slot = p;
            p *= lambda / (k + 1) as f64;
        }
        let mut observed = vec![0.0; max_k + 1];
        for i in 0..n {
            let mut rng = replicate_rng(9, i as u64);
            let c = poisson_count(lambda, &mut rng) as usize;
            observed[c.min(max_k)] += 1.0;
        }
        let expected: Vec<f64> = pmf.iter().map(|p| p * n as f64).collect();
        let (_, p_ok, _) = chi_square_gof(&observed, &expected, 5.0);
        assert!(p_ok > 0.01, "p = {p_ok}");

        // corrupt the rate: decisive rejection
        let expected_bad: Vec<f64> = expected.iter().map(|e| e * 0.0 + n as f64 / (max_k as f64 + 1.0)).collect();
        let (_, p_bad, _) = chi_square_gof(&observed, &expected_bad, 5.0);
        assert!(p_bad < 1e-6, "p = {p_bad}");
    }
}
