//! Sequential likelihood-ratio selection of the number of daily return lags.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mfqarch::{build_design_range, fit_profiled_range, MfqArchModel, MfqSpec};
use crate::timegrid::MixedFreqPanel;

use super::{lr_test, residual_sparsity, sparsity, EmpiricalQuantile, LrTestResult};

#[derive(Debug, Clone)]
pub struct LagTestReport {
    pub selected_q: usize,
    /// `tests[j - 1]` tests `beta_j = 0` (model with `j - 1` lags against `j`).
    pub tests: Vec<LrTestResult>,
    /// Profiled fits for `q = 0..=q_max`, all on the same rows.
    pub models: Vec<MfqArchModel>,
}

impl LagTestReport {
    pub fn p_values(&self) -> Vec<f64> {
        self.tests.iter().map(|t| t.p_value).collect()
    }
}

/// Fits the template with `0..=q_max` return lags on a common sample and
/// tests each added lag. The selected order is one less than the first lag
/// whose test does not reject at `alpha`, or `q_max` if all reject.
pub fn sequential_lag_test(
    panel: &MixedFreqPanel,
    template: &MfqSpec,
    tau: f64,
    q_max: usize,
    alpha: f64,
) -> Result<LagTestReport> {
    if q_max == 0 {
        return Err(Error::Config("q_max must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let base = MfqSpec {
        tau,
        ..template.clone()
    };
    let rows = base.with_q(q_max).first_row()..panel.len();

    let models = (0..=q_max)
        .map(|q| fit_profiled_range(panel, &base.with_q(q), rows.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mut tests = Vec::with_capacity(q_max);
    for j in 1..=q_max {
        let col = usize::from(base.use_midas) + j;
        let s = scale_adjusted_sparsity(panel, &models[j], col)?;
        tests.push(lr_test(&models[j - 1].fit, &models[j].fit, s)?);
    }
    let selected_q = tests
        .iter()
        .position(|t| t.p_value >= alpha)
        .unwrap_or(q_max);
    Ok(LagTestReport {
        selected_q,
        tests,
        models,
    })
}

/// Sparsity scaling the LR statistic for dropping design column `col`.
///
/// In the ARCH location-scale model the conditional density at the quantile
/// is `f(F^-1(tau)) / sigma_i`, with `sigma_i` proportional to the fitted
/// quantile. A single pooled residual sparsity then understates the scale of
/// `2 (V_R - V_U)` for lag columns, which are large exactly when `sigma_i` is,
/// and the test over-rejects. Following the Koenker-Zhao treatment of quantile
/// ARCH models, the difference quotient is taken on residuals standardized by
/// `|fitted quantile|` and multiplied by the sandwich factor
/// `(D1^-1 D0 D1^-1)_jj / (D1^-1)_jj`, with `D0 = sum x x'` and
/// `D1 = sum x x' / |fitted quantile|`. Without heteroskedasticity the factor
/// reduces to the plain residual sparsity, which is also the fallback when the
/// fitted quantile comes close to zero (e.g. `tau` near one half).
fn scale_adjusted_sparsity(panel: &MixedFreqPanel, model: &MfqArchModel, col: usize) -> Result<f64> {
    let (_, x) = build_design_range(panel, &model.spec, model.omega2_star.unwrap_or(1.0), model.rows.clone())?;
    let (n, p) = x.shape();
    let scale: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|j| x[(i, j)] * model.theta_star[j]).sum::<f64>())
        .collect();
    let sign_ok = scale.iter().all(|q| q.signum() == scale[0].signum());
    let mut sorted_abs: Vec<f64> = scale.iter().map(|q| q.abs()).collect();
    sorted_abs.sort_by(|a, b| a.total_cmp(b));
    if !sign_ok || !(sorted_abs[0] > 1e-6 * sorted_abs[n / 2]) {
        log::warn!("fitted quantile too close to zero for scale standardization; using the residual sparsity");
        return residual_sparsity(&model.fit);
    }

    let u: Vec<f64> = model.fit.residuals.iter().zip(&scale).map(|(r, q)| r / q.abs()).collect();
    let eq = EmpiricalQuantile::new(&u);
    let s_u = sparsity(|t| eq.quantile(t), model.fit.tau, n)?;

    let factor = sandwich_factor(&x, &scale, col)?;
    let s = s_u * factor;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroSparsity);
    }
    Ok(s)
}

/// `(D1^-1 D0 D1^-1)_jj / (D1^-1)_jj` with `D0 = sum x x'` and
/// `D1 = sum x x' / |scale|`. Equals `|scale|` when the scale is constant.
fn sandwich_factor(x: &DMatrix<f64>, scale: &[f64], col: usize) -> Result<f64> {
    let (n, p) = x.shape();
    let mut d0 = DMatrix::<f64>::zeros(p, p);
    let mut d1 = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let w = 1.0 / scale[i].abs();
        for a in 0..p {
            for b in 0..=a {
                let v = x[(i, a)] * x[(i, b)];
                d0[(a, b)] += v;
                d1[(a, b)] += v * w;
            }
        }
    }
    d0.fill_upper_triangle_with_lower_triangle();
    d1.fill_upper_triangle_with_lower_triangle();
    let d1_inv = d1
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign("scaled design moment matrix is singular".into()))?;
    Ok((&d1_inv * &d0 * &d1_inv)[(col, col)] / d1_inv[(col, col)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(0.0..2.0) })
    }

    #[test]
    fn constant_scale_factor_is_the_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = design(200, &mut rng);
        for col in 0..3 {
            let f = sandwich_factor(&x, &vec![-0.7; 200], col).unwrap();
            assert!((f - 0.7).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn scale_rising_with_a_regressor_inflates_its_factor() {
        // D1 weights down the rows where column 2 is large, so the variance
        // of that coefficient grows relative to the Hessian-only term
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = design(2000, &mut rng);
        let scale: Vec<f64> = (0..2000).map(|i| 0.5 + x[(i, 2)]).collect();
        let mean_scale = scale.iter().sum::<f64>() / 2000.0;
        let harmonic = 2000.0 / scale.iter().map(|s| 1.0 / s).sum::<f64>();
        let f = sandwich_factor(&x, &scale, 2).unwrap();
        assert!(f > harmonic, "{f} vs harmonic mean {harmonic}");
        assert!(f < 2.0 * mean_scale);
    }
}
