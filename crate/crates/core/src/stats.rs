//! Distribution helpers shared by the estimators and tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Standard normal quantile function.
pub fn norm_ppf(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

pub fn norm_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Upper-tail probability of a chi-squared variate with `df` degrees of freedom.
pub fn chi2_sf(stat: f64, df: f64) -> f64 {
    if !(stat > 0.0) {
        return 1.0;
    }
    if !stat.is_finite() {
        return 0.0;
    }
    let p = ChiSquared::new(df).unwrap().sf(stat);
    p.clamp(0.0, 1.0)
}

/// Quantile of a standard (not unit-variance) Student-t with `nu` degrees of
/// freedom. Beyond `1e6` degrees of freedom the normal quantile is returned;
/// the difference is below `1e-5` there and the t inversion stops converging.
pub fn student_t_ppf(p: f64, nu: f64) -> f64 {
    if nu > 1e6 {
        return norm_ppf(p);
    }
    StudentsT::new(0.0, 1.0, nu).unwrap().inverse_cdf(p)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Empirical quantile as the order statistic `x_(ceil(n p))`, clamped to the sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "empirical quantile of empty sample");
    let k = (n as f64 * p).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Sorts a copy of `x` in ascending order.
pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_reference_values() {
        assert!((norm_ppf(0.05) + 1.6448536269514722).abs() < 1e-9);
        assert!((norm_ppf(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn t_quantile_large_df() {
        // t_{0.05} with 10 df from standard tables
        assert!((student_t_ppf(0.05, 10.0) + 1.812461).abs() < 1e-5);
        assert!((student_t_ppf(0.05, 500.0) - norm_ppf(0.05)).abs() < 5e-3);
        assert_eq!(student_t_ppf(0.05, 4e11), norm_ppf(0.05));
    }

    #[test]
    fn chi2_tail() {
        assert!((chi2_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-9);
        assert_eq!(chi2_sf(0.0, 1.0), 1.0);
        assert_eq!(chi2_sf(-1.0, 2.0), 1.0);
    }

    #[test]
    fn order_statistic_quantile() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&x, 0.25), 1.0);
        assert_eq!(empirical_quantile(&x, 0.26), 2.0);
        assert_eq!(empirical_quantile(&x, 1.0), 4.0);
        assert_eq!(empirical_quantile(&x, 0.0), 1.0);
    }
}
