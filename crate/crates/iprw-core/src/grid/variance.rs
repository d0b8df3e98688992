//! Exact second-moment engine and the variance recursion for iterated
//! standard random walks (`eta = xi`, so birth times are walk points).

use super::convolve::stieltjes_convolution;
use super::renewal::{discretize_cdf, renewal_function, shifted_renewal};
use super::{GridError, GridFunction, GridKind, GridMeasure};
use crate::step_models::JointStepModel;

/// Right-hand side of the exact second-moment identity
///
/// `E (sum_r V_{j-1}(t - S_r) 1{S_r <= t})^2
///    = 2 int V_{j-1}(t-y) V_j(t-y) dUtilde(y) + int V_{j-1}^2(t-y) dUtilde(y)`.
pub fn second_moment_sum(
    vjm1: &GridMeasure,
    vj: &GridMeasure,
    u_tilde: &GridMeasure,
) -> Result<GridFunction, GridError> {
    vjm1.same_grid(vj)?;
    vj.same_grid(u_tilde)?;
    let cross: Vec<f64> = vjm1
        .values()
        .iter()
        .zip(vj.values())
        .map(|(a, b)| a * b)
        .collect();
    let square: Vec<f64> = vjm1.values().iter().map(|a| a * a).collect();
    let first = stieltjes_convolution(&cross, u_tilde)?;
    let second = stieltjes_convolution(&square, u_tilde)?;
    let values: Vec<f64> = first
        .iter()
        .zip(&second)
        .map(|(a, b)| 2.0 * a + b)
        .collect();
    Ok(GridMeasure::from_parts(
        vj.h(),
        values,
        GridKind::Plain,
        vj.mass_rule(),
    ))
}

/// Variance curves `D_j(t) = Var N_j(t)` for `j = 1..=j_max`, together with
/// the grids they were built from.
pub struct VarianceCurves {
    pub u: GridMeasure,
    pub u_tilde: GridMeasure,
    /// Mean functions `V_1..V_{j_max}` (for `eta = xi`, `V = U - 1`).
    pub v: Vec<GridMeasure>,
    pub d: Vec<GridFunction>,
    /// Grid points where a slightly negative variance value was clamped
    /// to zero (within the error budget).
    pub clamped_points: usize,
}

/// Variance recursion:
/// `D_1` from the `j = 1` second-moment identity, then
/// `D_j(t) = int D_{j-1}(t-y) dUtilde(y) + [second_moment_sum - V_j^2]`.
///
/// Negative values inside the grid-error budget are clamped to zero;
/// values beyond it abort.
pub fn variance_numeric(
    model: &JointStepModel,
    j_max: u32,
    h: f64,
    t_max: f64,
) -> Result<VarianceCurves, GridError> {
    if !model.is_equal_coupling() {
        return Err(GridError::PreconditionViolated("equal coupling (eta = xi)"));
    }
    assert!(j_max >= 1);
    let f = discretize_cdf(model.xi_law(), h, t_max)?;
    let u = renewal_function(&f)?;
    let u_tilde = shifted_renewal(&u);
    // birth times are the walk points, so V = U - 1 exactly
    let v1 = u_tilde.clone();
    let v = super::renewal::convolution_powers(&v1, j_max)?;

    let mut d: Vec<GridFunction> = Vec::with_capacity(j_max as usize);
    let mut clamped = 0usize;

    let ones = GridMeasure::from_parts(h, vec![1.0; u.len()], GridKind::Plain, u.mass_rule());
    let sm1 = second_moment_sum(&ones, &v[0], &u_tilde)?;
    let d1: Vec<f64> = sm1
        .values()
        .iter()
        .zip(v[0].values())
        .map(|(s, vv)| s - vv * vv)
        .collect();
    d.push(clamp_negatives(d1, h, u.mass_rule(), &mut clamped)?);

    for j in 2..=j_max {
        let prev = &d[(j - 2) as usize];
        let propagated = stieltjes_convolution(prev.values(), &u_tilde)?;
        let sm = second_moment_sum(&v[(j - 2) as usize], &v[(j - 1) as usize], &u_tilde)?;
        let vj = &v[(j - 1) as usize];
        let dj: Vec<f64> = propagated
            .iter()
            .zip(sm.values())
            .zip(vj.values())
            .map(|((p, s), vv)| p + s - vv * vv)
            .collect();
        d.push(clamp_negatives(dj, h, u.mass_rule(), &mut clamped)?);
    }

    Ok(VarianceCurves { u, u_tilde, v, d, clamped_points: clamped })
}

fn clamp_negatives(
    mut values: Vec<f64>,
    h: f64,
    rule: super::MassRule,
    clamped: &mut usize,
) -> Result<GridFunction, GridError> {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let budget = 1e-6 * scale;
    for (k, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -budget {
                return Err(GridError::NegativeVariance {
                    value: *v,
                    t: k as f64 * h,
                    budget,
                });
            }
            *v = 0.0;
            *clamped += 1;
        }
    }
    Ok(GridMeasure::from_parts(h, values, GridKind::Plain, rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::step_models::StepLaw;

    fn poisson_model() -> JointStepModel {
        JointStepModel::Equal {
            xi: StepLaw::Exponential { rate: 1.0 },
        }
    }

    #[test]
    fn second_moment_identity_poisson_first_generation() {
        // j = 1: output = 2 int Vtilde dUtilde + Utilde = t^2 + t,
        // the second moment of a Poisson(t) count
        let h = 1e-3;
        let curves = variance_numeric(&poisson_model(), 1, h, 10.0).unwrap();
        let ones = GridMeasure::from_parts(
            h,
            vec![1.0; curves.u.len()],
            GridKind::Plain,
            curves.u.mass_rule(),
        );
        let sm = second_moment_sum(&ones, &curves.v[0], &curves.u_tilde).unwrap();
        for k in (0..sm.len()).step_by(1000) {
            let t = k as f64 * h;
            let exact = t * t + t;
            assert!(
                (sm.at_index(k) - exact).abs() < 1e-2 * (1.0 + exact),
                "t = {t}: {} vs {exact}",
                sm.at_index(k)
            );
        }
        assert_eq!(sm.at_index(0), 0.0);
    }

    #[test]
    fn variance_curve_poisson_first_generation() {
        // D_1(t) = t for the Poisson case
        let h = 1e-3;
        let curves = variance_numeric(&poisson_model(), 1, h, 10.0).unwrap();
        let d1 = &curves.d[0];
        for k in (100..d1.len()).step_by(900) {
            let t = k as f64 * h;
            assert!(
                ((d1.at_index(k) - t) / t).abs() < 1e-2,
                "t = {t}: {}",
                d1.at_index(k)
            );
        }
        assert_eq!(d1.at_index(0), 0.0);
    }

    #[test]
    fn variance_curve_poisson_second_generation() {
        // D_2(t) = t^3/3 + t^2/2 exactly; D_2(t)/(t^3/3) -> 1
        let h = 5e-3;
        let curves = variance_numeric(&poisson_model(), 2, h, 50.0).unwrap();
        let d2 = &curves.d[1];
        let k = d2.index_of(50.0);
        let t: f64 = 50.0;
        let exact = t.powi(3) / 3.0 + t * t / 2.0;
        assert!(
            ((d2.at_index(k) - exact) / exact).abs() < 1e-2,
            "{} vs {exact}",
            d2.at_index(k)
        );
        let ratio = d2.at_index(k) / (t.powi(3) / 3.0);
        assert!((ratio - 1.0).abs() < 0.10, "ratio {ratio}");
    }

    #[test]
    fn variance_requires_equal_coupling() {
        let model = JointStepModel::Independent {
            xi: StepLaw::Exponential { rate: 1.0 },
            eta: StepLaw::Exponential { rate: 1.0 },
        };
        assert!(matches!(
            variance_numeric(&model, 1, 0.01, 1.0),
            Err(GridError::PreconditionViolated(_))
        ));
    }
}
