//! Property tests for the quantile-regression solver and the small
//! numerical building blocks around it.

use mfq_core::mcs::quantile_loss;
use mfq_core::mfqarch::{check_stationarity, ZMoment};
use mfq_core::midas::beta_weights;
use mfq_core::qreg::{check_loss, fit, verify_optimality};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn design(rows: &[(f64, f64)], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |i, j| match j {
        0 => 1.0,
        1 => rows[i].0,
        _ => rows[i].1,
    })
}

/// Brute-force minimum of the check loss over intercepts placed at the
/// sample points, where an optimum always lies.
fn intercept_oracle(y: &[f64], tau: f64) -> f64 {
    y.iter()
        .map(|c| y.iter().map(|v| check_loss(v - c, tau)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn sample() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>)> {
    (12usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((-3.0f64..3.0, 0.0f64..5.0), n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solution_satisfies_the_subgradient_certificate((rows, y) in sample(), tau in 0.02f64..0.98, p in 1usize..=3) {
        let x = design(&rows, p);
        let f = fit(&y, &x, tau).unwrap();
        prop_assert!(verify_optimality(&y, &x, tau, &f.theta, 1e-8));
    }

    #[test]
    fn intercept_only_matches_enumeration(y in prop::collection::vec(-5.0f64..5.0, 3..80), tau in 0.01f64..0.99) {
        let f = fit(&y, &DMatrix::from_element(y.len(), 1, 1.0), tau).unwrap();
        prop_assert!((f.loss - intercept_oracle(&y, tau)).abs() <= 1e-9);
    }

    #[test]
    fn loss_is_scale_equivariant((rows, y) in sample(), tau in 0.05f64..0.95, c in 0.1f64..20.0) {
        let x = design(&rows, 3);
        let a = fit(&y, &x, tau).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| c * v).collect();
        let b = fit(&ys, &x, tau).unwrap();
        prop_assert!((b.loss - c * a.loss).abs() <= 1e-9 * (1.0 + c * a.loss));
    }

    #[test]
    fn loss_is_invariant_to_shifts_along_the_design((rows, y) in sample(), tau in 0.05f64..0.95, b0 in -3.0f64..3.0, b1 in -3.0f64..3.0) {
        let x = design(&rows, 2);
        let a = fit(&y, &x, tau).unwrap();
        let ys: Vec<f64> = (0..y.len()).map(|i| y[i] + b0 + b1 * rows[i].0).collect();
        let b = fit(&ys, &x, tau).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-9 * (1.0 + a.loss));
    }

    #[test]
    fn interpolates_at_least_p_observations((rows, y) in sample(), tau in 0.05f64..0.95, p in 1usize..=3) {
        let x = design(&rows, p);
        let f = fit(&y, &x, tau).unwrap();
        let zero = f.residuals.iter().filter(|r| r.abs() < 1e-9).count();
        prop_assert!(zero >= p);
        // residual signs bracket tau
        let n = y.len() as f64;
        let neg = f.residuals.iter().filter(|r| **r < -1e-9).count() as f64;
        prop_assert!(neg / n <= tau + 1e-12);
        prop_assert!((neg + zero as f64) / n >= tau - 1e-12);
    }

    #[test]
    fn intercept_quantile_is_monotone_in_tau(y in prop::collection::vec(-5.0f64..5.0, 5..60), t1 in 0.02f64..0.98, t2 in 0.02f64..0.98) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let ones = DMatrix::from_element(y.len(), 1, 1.0);
        let a = fit(&y, &ones, lo).unwrap();
        let b = fit(&y, &ones, hi).unwrap();
        // the solution set at each tau is an interval of order statistics;
        // compare losses at the swapped estimates to allow for ties
        let la = |c: f64, t: f64| y.iter().map(|v| check_loss(v - c, t)).sum::<f64>();
        prop_assert!(a.theta[0] <= b.theta[0] + 1e-12
            || (la(b.theta[0], lo) - a.loss).abs() <= 1e-9
            || (la(a.theta[0], hi) - b.loss).abs() <= 1e-9);
    }

    #[test]
    fn beta_weights_normalize_and_decay(k in 1usize..200, w2 in 1.0f64..80.0) {
        let w = beta_weights(k, 1.0, w2).unwrap().weights;
        prop_assert_eq!(w.len(), k);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!(w.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn single_lag_radius_is_the_scaled_coefficient(b1 in 0.0f64..3.0, theta in 0.0f64..2.0, bx in 0.0f64..2.0, z in 0.1f64..2.0) {
        let r = check_stationarity(&[b1], theta, bx, ZMoment::Second(z));
        prop_assert!((r.spectral_radius - z * b1).abs() <= 1e-12);
        prop_assert_eq!(r.stationary, z * b1 < 1.0);
    }

    #[test]
    fn radius_is_monotone_in_the_lag_coefficients(b in prop::collection::vec(0.0f64..0.5, 1..6), bump in 0.0f64..0.3, j in 0usize..6) {
        let mut c = b.clone();
        let j = j % c.len();
        c[j] += bump;
        let r0 = check_stationarity(&b, 0.1, 0.0, ZMoment::default()).spectral_radius;
        let r1 = check_stationarity(&c, 0.1, 0.0, ZMoment::default()).spectral_radius;
        prop_assert!(r1 >= r0 - 1e-10);
    }

    #[test]
    fn var_loss_is_nonnegative_and_zero_on_the_line(ret in -10.0f64..10.0, var in -10.0f64..10.0, tau in 0.01f64..0.99) {
        prop_assert!(quantile_loss(ret, var, tau) >= 0.0);
        prop_assert_eq!(quantile_loss(var, var, tau), 0.0);
        prop_assert_eq!(quantile_loss(ret, var, tau), check_loss(ret - var, tau));
    }
}
