//! Grid audits of the uniform renewal bounds: Lorden's inequality, its
//! extension to convolution powers, and the two-sided envelopes of the
//! mean function.

use super::{GridError, GridMeasure};
use crate::numeric::factorial;
use crate::step_models::MomentSummary;

/// Outcome of one bound audited on a grid. `worst_margin` is the smallest
/// slack over all grid points (negative means the bound was breached);
/// a point counts as a violation only when its slack is below `-budget`,
/// the declared discretization budget.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundAudit {
    pub bound: String,
    pub worst_margin: f64,
    pub worst_t: f64,
    pub violations: usize,
    pub budget: f64,
    pub pass: bool,
}

fn audit(
    bound: impl Into<String>,
    h: f64,
    slacks: impl Iterator<Item = f64>,
    budget: f64,
) -> BoundAudit {
    let mut worst = f64::INFINITY;
    let mut worst_t = 0.0;
    let mut violations = 0usize;
    for (k, s) in slacks.enumerate() {
        if s < worst {
            worst = s;
            worst_t = k as f64 * h;
        }
        if s < -budget {
            violations += 1;
        }
    }
    BoundAudit {
        bound: bound.into(),
        worst_margin: worst,
        worst_t,
        violations,
        budget,
        pass: violations == 0,
    }
}

/// Lorden's inequality `0 <= U(t) - t/m <= c_U` with `c_U = E xi^2 / m^2`.
pub fn audit_lorden(
    u: &GridMeasure,
    moments: &MomentSummary,
    budget: f64,
) -> Result<Vec<BoundAudit>, GridError> {
    let c_u = moments
        .lorden_bound_cu()
        .map_err(|_| GridError::PreconditionViolated("finite E xi^2"))?;
    let h = u.h();
    let m = moments.m;
    let lower = audit(
        "U(t) - t/m >= 0",
        h,
        u.values()
            .iter()
            .enumerate()
            .map(|(k, &v)| v - k as f64 * h / m),
        budget,
    );
    let upper = audit(
        format!("U(t) - t/m <= c_U = {c_u:.6}"),
        h,
        u.values()
            .iter()
            .enumerate()
            .map(|(k, &v)| c_u - (v - k as f64 * h / m)),
        budget,
    );
    Ok(vec![lower, upper])
}

/// Lower bound for convolution powers: `U_j(t) >= t^j / (j! m^j)`.
pub fn audit_convolution_lower(
    uj: &GridMeasure,
    j: u32,
    m: f64,
    budget: f64,
) -> BoundAudit {
    let h = uj.h();
    let norm = factorial(j) * m.powi(j as i32);
    audit(
        format!("U_{j}(t) >= t^{j}/({j}! m^{j})"),
        h,
        uj.values()
            .iter()
            .enumerate()
            .map(move |(k, &v)| v - (k as f64 * h).powi(j as i32) / norm),
        budget,
    )
}

/// Two-sided bound on the mean function: `|V(t) - t/m| <= c_V` with
/// `c_V = max(c_U, E eta / m)`; needs `E eta < infinity`.
pub fn audit_mean_lorden(
    v: &GridMeasure,
    moments: &MomentSummary,
    budget: f64,
) -> Result<Vec<BoundAudit>, GridError> {
    let c_u = moments
        .lorden_bound_cu()
        .map_err(|_| GridError::PreconditionViolated("finite E xi^2"))?;
    if !moments.eta_mean.is_finite() {
        return Err(GridError::PreconditionViolated("finite E eta"));
    }
    let c_v = c_u.max(moments.eta_mean / moments.m);
    let h = v.h();
    let m = moments.m;
    Ok(vec![audit(
        format!("|V(t) - t/m| <= c_V = {c_v:.6}"),
        h,
        v.values()
            .iter()
            .enumerate()
            .map(move |(k, &el)| c_v - (el - k as f64 * h / m).abs()),
        budget,
    )])
}

/// Heavy-tailed envelope `-c_1 - c_2 t^{1-a} <= V(t) - t/m <= c_U`.
///
/// No closed-form constants exist; the audit fits the smallest pair over
/// the grid (`c_1` covers `t <= 1`, `c_2` the polynomial part beyond) and
/// reports them together with the upper-side audit.
pub struct HeavyTailEnvelope {
    pub c1: f64,
    pub c2: f64,
    pub audits: Vec<BoundAudit>,
}

pub fn audit_heavy_tail_envelope(
    v: &GridMeasure,
    moments: &MomentSummary,
    a: f64,
    budget: f64,
) -> Result<HeavyTailEnvelope, GridError> {
    let c_u = moments
        .lorden_bound_cu()
        .map_err(|_| GridError::PreconditionViolated("finite E xi^2"))?;
    let h = v.h();
    let m = moments.m;
    let deficit = |k: usize, val: f64| (k as f64 * h / m - val).max(0.0);
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    for (k, &val) in v.values().iter().enumerate() {
        let t = k as f64 * h;
        let d = deficit(k, val);
        if t <= 1.0 {
            c1 = c1.max(d);
        } else {
            c2 = c2.max((d - c1) / t.powf(1.0 - a)).max(0.0);
        }
    }
    let lower = audit(
        format!("V(t) - t/m >= -c_1 - c_2 t^(1-a), fitted c_1 = {c1:.6}, c_2 = {c2:.6}"),
        h,
        v.values().iter().enumerate().map(|(k, &val)| {
            let t = k as f64 * h;
            (val - t / m) + c1 + c2 * t.powf(1.0 - a)
        }),
        budget,
    );
    let upper = audit(
        format!("V(t) - t/m <= c_U = {c_u:.6}"),
        h,
        v.values()
            .iter()
            .enumerate()
            .map(|(k, &val)| c_u - (val - k as f64 * h / m)),
        budget,
    );
    Ok(HeavyTailEnvelope { c1, c2, audits: vec![lower, upper] })
}
