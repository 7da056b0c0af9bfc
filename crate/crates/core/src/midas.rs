//! Beta lag weighting of low-frequency observations.

use crate::error::{Error, Result};
use crate::timegrid::MixedFreqPanel;

/// Normalized Beta-kernel weights over `k_max` monthly lags.
///
/// `weights[k - 1]` multiplies `MV_{t-k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaWeights {
    pub k_max: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub weights: Vec<f64>,
}

/// Computes `(k/K)^(w1-1) (1-k/K)^(w2-1)`, normalized to sum to one.
///
/// Evaluated in log space and shifted by the maximum before exponentiating,
/// so very steep kernels (large `omega2`) do not underflow to an all-zero
/// vector.
pub fn beta_weights(k_max: usize, omega1: f64, omega2: f64) -> Result<BetaWeights> {
    if k_max == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if !(omega1 >= 1.0) || !(omega2 >= 1.0) || !omega1.is_finite() || !omega2.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Beta weight parameters must be finite and >= 1, got ({omega1}, {omega2})"
        )));
    }
    if k_max == 1 {
        return Ok(BetaWeights {
            k_max,
            omega1,
            omega2,
            weights: vec![1.0],
        });
    }

    let kf = k_max as f64;
    let log_kernel = |k: usize| -> f64 {
        let u = k as f64 / kf;
        let a = if omega1 == 1.0 { 0.0 } else { (omega1 - 1.0) * u.ln() };
        let b = if omega2 == 1.0 {
            0.0
        } else {
            (omega2 - 1.0) * (1.0 - u).ln()
        };
        a + b
    };
    let logs: Vec<f64> = (1..=k_max).map(log_kernel).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(top.is_finite(), "Beta kernel vanished at every lag");
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    Ok(BetaWeights {
        k_max,
        omega1,
        omega2,
        weights,
    })
}

/// Weighted sum of the `K` monthly observations preceding month position `t`.
pub fn weighted_sum(panel: &MixedFreqPanel, t: usize, w: &BetaWeights) -> Result<f64> {
    weighted_sum_values(&panel.monthly_values(), t, w)
}

/// [`weighted_sum`] over a bare slice of monthly values.
pub fn weighted_sum_values(mv: &[f64], t: usize, w: &BetaWeights) -> Result<f64> {
    if t < w.k_max || t > mv.len() {
        return Err(Error::InsufficientHistory(format!(
            "month position {t} lacks {} prior monthly observations",
            w.k_max
        )));
    }
    Ok(w.weights
        .iter()
        .enumerate()
        .map(|(k, wk)| wk * mv[t - 1 - k])
        .sum())
}

/// `WS_{t-1}` for every month position `t` in `0..=mv.len()`; `None` where
/// fewer than `K` lags exist.
pub fn weighted_sums(mv: &[f64], w: &BetaWeights) -> Vec<Option<f64>> {
    (0..=mv.len())
        .map(|t| weighted_sum_values(mv, t, w).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{build_panel, DailyObs, MonthlyObs, YearMonth};
    use chrono::NaiveDate;

    #[test]
    fn flat_weights() {
        let w = beta_weights(4, 1.0, 1.0).unwrap();
        for v in &w.weights {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_decay_kills_last_lag() {
        // (1 - k/3) for k = 1, 2, 3 -> 2/3, 1/3, 0; normalized by 1.
        let w = beta_weights(3, 1.0, 2.0).unwrap();
        assert!((w.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.weights[2], 0.0);
    }

    #[test]
    fn single_lag_is_unit_weight() {
        for om in [1.0, 2.0, 37.0] {
            assert_eq!(beta_weights(1, 1.0, om).unwrap().weights, vec![1.0]);
        }
    }

    #[test]
    fn steep_kernel_concentrates_on_first_lag() {
        let w = beta_weights(12, 1.0, 1e4).unwrap();
        assert!((w.weights[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_inadmissible_parameters() {
        assert!(beta_weights(0, 1.0, 1.0).is_err());
        assert!(beta_weights(5, 0.5, 1.0).is_err());
        assert!(beta_weights(5, 1.0, f64::NAN).is_err());
    }

    fn panel_with_months(values: &[f64]) -> MixedFreqPanel {
        let monthly: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                MonthlyObs::new(YearMonth::from_ordinal(2000 * 12 + k as i64), *v).unwrap()
            })
            .collect();
        let last = YearMonth::from_ordinal(2000 * 12 + values.len() as i64 - 1);
        let daily = vec![DailyObs::new(
            NaiveDate::from_ymd_opt(last.year, last.month, 3).unwrap(),
            0.0,
            None,
        )
        .unwrap()];
        build_panel(daily, monthly, 1).unwrap()
    }

    #[test]
    fn constant_series_sums_to_constant() {
        let panel = panel_with_months(&[3.5; 10]);
        let w = beta_weights(6, 1.0, 4.2).unwrap();
        assert!((weighted_sum(&panel, 8, &w).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn two_lag_arithmetic() {
        // MV_{t-2} = -4, MV_{t-1} = 2
        let panel = panel_with_months(&[-4.0, 2.0, 0.0]);
        let w = BetaWeights {
            k_max: 2,
            omega1: 1.0,
            omega2: 1.0,
            weights: vec![0.75, 0.25],
        };
        assert!((weighted_sum(&panel, 2, &w).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_month_has_no_history() {
        let panel = panel_with_months(&[1.0, 2.0, 3.0]);
        let w = beta_weights(2, 1.0, 2.0).unwrap();
        assert!(matches!(
            weighted_sum(&panel, 0, &w),
            Err(Error::InsufficientHistory(_))
        ));
    }
}
