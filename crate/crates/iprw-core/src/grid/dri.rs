//! Direct Riemann integrability check: upper and lower Riemann sums over
//! uniform cells, at a cell width and at half that width.

/// Admissible weight functions for the key renewal integral. All are
/// nonnegative on `[0, infinity)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DriFunction {
    /// `1` on `[0, width)`.
    Indicator { width: f64 },
    /// `exp(-rate y)`.
    ExpDecay { rate: f64 },
    /// `y^power` on `[0, cutoff)`.
    TruncatedPoly { power: f64, cutoff: f64 },
    /// Piecewise constant: `values[floor(y/step)]` on the sampled window,
    /// zero beyond it. The window must decay to zero for the check to
    /// certify integrability on the half line.
    Sampled { values: Vec<f64>, step: f64 },
}

impl DriFunction {
    pub fn eval(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        match self {
            DriFunction::Indicator { width } => {
                if y < *width {
                    1.0
                } else {
                    0.0
                }
            }
            DriFunction::ExpDecay { rate } => (-rate * y).exp(),
            DriFunction::TruncatedPoly { power, cutoff } => {
                if y < *cutoff {
                    y.powf(*power)
                } else {
                    0.0
                }
            }
            DriFunction::Sampled { values, step } => {
                let idx = (y / step).floor() as usize;
                values.get(idx).copied().unwrap_or(0.0)
            }
        }
    }

    /// Exact integral over `[0, infinity)`.
    pub fn integral(&self) -> f64 {
        match self {
            DriFunction::Indicator { width } => *width,
            DriFunction::ExpDecay { rate } => 1.0 / rate,
            DriFunction::TruncatedPoly { power, cutoff } => {
                cutoff.powf(power + 1.0) / (power + 1.0)
            }
            DriFunction::Sampled { values, step } => step * values.iter().sum::<f64>(),
        }
    }

    /// End of the support when compact.
    fn support_end(&self) -> Option<f64> {
        match self {
            DriFunction::Indicator { width } => Some(*width),
            DriFunction::ExpDecay { .. } => None,
            DriFunction::TruncatedPoly { cutoff, .. } => Some(*cutoff),
            DriFunction::Sampled { values, step } => Some(values.len() as f64 * step),
        }
    }

    /// sup over `[a, b)`.
    fn cell_sup(&self, a: f64, b: f64) -> f64 {
        match self {
            DriFunction::Indicator { width } => {
                if a < *width {
                    1.0
                } else {
                    0.0
                }
            }
            DriFunction::ExpDecay { rate } => (-rate * a).exp(),
            DriFunction::TruncatedPoly { power, cutoff } => {
                if a >= *cutoff {
                    0.0
                } else {
                    b.min(*cutoff).powf(*power)
                }
            }
            DriFunction::Sampled { values, step } => {
                let lo = (a / step).floor() as usize;
                let hi = ((b / step).ceil() as usize).min(values.len());
                values[lo.min(values.len())..hi]
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max)
            }
        }
    }

    /// inf over `[a, b)`.
    fn cell_inf(&self, a: f64, b: f64) -> f64 {
        match self {
            DriFunction::Indicator { width } => {
                if b <= *width {
                    1.0
                } else {
                    0.0
                }
            }
            DriFunction::ExpDecay { rate } => (-rate * b).exp(),
            DriFunction::TruncatedPoly { power, cutoff } => {
                if b > *cutoff {
                    0.0
                } else {
                    a.powf(*power)
                }
            }
            DriFunction::Sampled { values, step } => {
                if b > values.len() as f64 * step {
                    return 0.0;
                }
                let lo = (a / step).floor() as usize;
                let hi = ((b / step).ceil() as usize).min(values.len());
                values[lo.min(values.len())..hi]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DriReport {
    pub pass: bool,
    pub delta: f64,
    pub upper_coarse: f64,
    pub lower_coarse: f64,
    pub upper_fine: f64,
    pub lower_fine: f64,
    /// Midpoint of the fine bracket.
    pub integral_estimate: f64,
    pub reason: Option<String>,
}

/// Upper and lower Riemann sums over cells of width `delta` and `delta/2`.
/// Passes when both upper sums are certifiably finite and the
/// upper-minus-lower gap shrinks by at least 25% under halving.
pub fn dri_check(f: &DriFunction, delta: f64) -> DriReport {
    assert!(delta > 0.0);

    let fail = |reason: String| DriReport {
        pass: false,
        delta,
        upper_coarse: f64::INFINITY,
        lower_coarse: 0.0,
        upper_fine: f64::INFINITY,
        lower_fine: 0.0,
        integral_estimate: f64::NAN,
        reason: Some(reason),
    };

    if let DriFunction::Sampled { values, step } = f {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("sampled values must be finite and nonnegative".into());
        }
        let max = values.iter().cloned().fold(0.0, f64::max);
        if let Some(last) = values.last() {
            if *last > 1e-9 * max.max(1.0) {
                return fail(format!(
                    "sampled window ends at {} without decaying to zero; \
                     the upper sum over [0, infinity) cannot be certified finite",
                    *last
                ));
            }
        }
        let _ = step;
    }

    let (up_c, lo_c) = riemann_sums(f, delta);
    let (up_f, lo_f) = riemann_sums(f, delta / 2.0);
    if !(up_c.is_finite() && up_f.is_finite()) {
        return fail("upper Riemann sum diverges".into());
    }
    let gap_c = up_c - lo_c;
    let gap_f = up_f - lo_f;
    let tol = 1e-12 * (1.0 + up_c.abs());
    let pass = gap_f <= 0.75 * gap_c + tol;
    DriReport {
        pass,
        delta,
        upper_coarse: up_c,
        lower_coarse: lo_c,
        upper_fine: up_f,
        lower_fine: lo_f,
        integral_estimate: 0.5 * (up_f + lo_f),
        reason: if pass {
            None
        } else {
            Some(format!(
                "upper-lower gap shrank only from {gap_c} to {gap_f} under halving"
            ))
        },
    }
}

fn riemann_sums(f: &DriFunction, delta: f64) -> (f64, f64) {
    let mut upper = 0.0;
    let mut lower = 0.0;
    let end = f.support_end();
    let mut n = 0usize;
    loop {
        let a = n as f64 * delta;
        let b = a + delta;
        if let Some(e) = end {
            if a >= e {
                break;
            }
        }
        let s = f.cell_sup(a, b);
        upper += delta * s;
        lower += delta * f.cell_inf(a, b);
        if end.is_none() && s < 1e-16 {
            break;
        }
        n += 1;
        if n > 50_000_000 {
            return (f64::INFINITY, lower);
        }
    }
    (upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_passes_with_exact_integral() {
        let f = DriFunction::Indicator { width: 0.5 };
        let r = dri_check(&f, 1.0);
        assert!(r.pass, "{r:?}");
        assert!((f.integral() - 0.5).abs() < 1e-15);
        assert!((r.integral_estimate - 0.5).abs() <= 0.25 + 1e-12);
    }

    #[test]
    fn exp_decay_passes_with_geometric_tail() {
        let f = DriFunction::ExpDecay { rate: 1.0 };
        let r = dri_check(&f, 1.0);
        assert!(r.pass, "{r:?}");
        // gap at width delta is exactly delta
        assert!((r.upper_coarse - r.lower_coarse - 1.0).abs() < 1e-9);
        assert!((r.upper_fine - r.lower_fine - 0.5).abs() < 1e-9);
        assert!((f.integral() - 1.0).abs() < 1e-15);
        assert!((r.integral_estimate - 1.0).abs() < 0.5);
    }

    #[test]
    fn truncated_poly_passes() {
        let f = DriFunction::TruncatedPoly { power: 2.0, cutoff: 3.0 };
        let r = dri_check(&f, 0.5);
        assert!(r.pass, "{r:?}");
        assert!((f.integral() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn non_decaying_sampled_constant_fails() {
        let f = DriFunction::Sampled {
            values: vec![1.0; 100],
            step: 0.1,
        };
        let r = dri_check(&f, 1.0);
        assert!(!r.pass);
        assert!(r.reason.unwrap().contains("without decaying"));
    }

    #[test]
    fn decaying_sampled_passes() {
        let values: Vec<f64> = (0..200).map(|k| (-(k as f64) * 0.05).exp()).collect();
        let mut values = values;
        *values.last_mut().unwrap() = 0.0;
        let f = DriFunction::Sampled { values, step: 0.1 };
        let r = dri_check(&f, 1.0);
        assert!(r.pass, "{r:?}");
    }
}
