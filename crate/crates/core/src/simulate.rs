//! Data-generating process for mixed-frequency quantile ARCH returns,
//! Hansen's skewed Student-t sampler and the Monte Carlo study runner.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mfqarch::{check_stationarity, fit_profiled, rescale_to_structural, MfqSpec, ZMoment};
use crate::midas::{beta_weights, weighted_sums};
use crate::qreg::sequential_lag_test;
use crate::stats::norm_ppf;
use crate::timegrid::{build_panel, DailyObs, MixedFreqPanel, MonthlyObs, YearMonth};

/// Daily steps discarded before the kept sample (rounded up to whole months).
pub const BURN_IN_DAYS: usize = 500;

/// Hansen skewed-t skewness parameter used when the MV innovation is
/// described as strongly left-skewed.
pub const DEFAULT_SKEW_LAMBDA: f64 = -0.95;

/// Law of the monthly AR(1) innovation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MvInnovation {
    Normal,
    /// Hansen's skewed t with `df > 2` and `lambda` in `(-1, 1)`.
    SkewT { df: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    /// `beta0, beta1, ..., betaq`.
    pub betas: Vec<f64>,
    pub theta: f64,
    pub omega2: f64,
    pub k_lags: usize,
    pub phi: f64,
    pub mv_innovation: MvInnovation,
    pub n_daily: usize,
    pub days_per_month: usize,
    pub seed: u64,
    /// Loading on the lagged realized measure `|X_{i-1}|`.
    pub beta_x: f64,
    /// Log-scale dispersion of the realized measure `X = sigma v`,
    /// `v` lognormal with unit mean.
    pub x_log_sd: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.05, 0.30, 0.25, 0.20, 0.15],
            theta: 0.125,
            omega2: 2.0,
            k_lags: 24,
            phi: 0.7,
            mv_innovation: MvInnovation::SkewT {
                df: 7.0,
                lambda: DEFAULT_SKEW_LAMBDA,
            },
            n_daily: 5000,
            days_per_month: 21,
            seed: 42,
            beta_x: 0.0,
            x_log_sd: 0.3,
        }
    }
}

impl DgpConfig {
    pub fn q(&self) -> usize {
        self.betas.len().saturating_sub(1)
    }

    /// Structural coefficients in the order of the fitted MF-Q-ARCH design.
    pub fn truth(&self, use_x: bool) -> Vec<f64> {
        let mut v = vec![self.betas[0], self.theta];
        v.extend(&self.betas[1..]);
        if use_x {
            v.push(self.beta_x);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Config("at least beta0 is required".into()));
        }
        if !(self.betas[0] > 0.0) {
            return Err(Error::Config("beta0 must be positive".into()));
        }
        if self.betas.iter().chain([&self.theta, &self.beta_x]).any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(Error::Config("DGP coefficients must be finite and non-negative".into()));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::Config(format!("|phi| must be below 1, got {}", self.phi)));
        }
        if self.k_lags == 0 || self.n_daily == 0 {
            return Err(Error::Config("k_lags and n_daily must be positive".into()));
        }
        if !(1..=28).contains(&self.days_per_month) {
            return Err(Error::Config("days_per_month must lie in 1..=28".into()));
        }
        if !(self.omega2 >= 1.0) {
            return Err(Error::Config("omega2 must be at least 1".into()));
        }
        if let MvInnovation::SkewT { df, lambda } = self.mv_innovation {
            if !(df > 2.0) || !(lambda > -1.0 && lambda < 1.0) {
                return Err(Error::Config(format!(
                    "skewed t needs df > 2 and lambda in (-1, 1), got ({df}, {lambda})"
                )));
            }
        }
        if !(self.x_log_sd >= 0.0) {
            return Err(Error::Config("x_log_sd must be non-negative".into()));
        }
        let report = check_stationarity(
            &self.betas[1..],
            self.theta,
            self.beta_x,
            ZMoment::default(),
        );
        if !report.stationary {
            return Err(Error::Config(format!(
                "DGP is not weakly stationary (spectral radius {:.4})",
                report.spectral_radius
            )));
        }
        Ok(())
    }
}

/// Hansen (1994) skewed Student-t with zero mean and unit variance.
#[derive(Debug, Clone, Copy)]
pub struct SkewT {
    lambda: f64,
    a: f64,
    b: f64,
    t: StudentT<f64>,
    t_scale: f64,
}

impl SkewT {
    pub fn new(df: f64, lambda: f64) -> Result<Self> {
        if !(df > 2.0) || !df.is_finite() {
            return Err(Error::InvalidInput(format!("skewed t needs df > 2, got {df}")));
        }
        if !(lambda > -1.0 && lambda < 1.0) {
            return Err(Error::InvalidInput(format!("lambda must lie in (-1, 1), got {lambda}")));
        }
        let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (std::f64::consts::PI * (df - 2.0)).sqrt();
        let a = 4.0 * lambda * c * (df - 2.0) / (df - 1.0);
        let b = (1.0 + 3.0 * lambda * lambda - a * a).sqrt();
        Ok(Self {
            lambda,
            a,
            b,
            t: StudentT::new(df).map_err(|e| Error::InvalidInput(e.to_string()))?,
            t_scale: ((df - 2.0) / df).sqrt(),
        })
    }
}

impl Distribution<f64> for SkewT {
    /// `u = -(1 - lambda)|w|` with probability `(1 - lambda)/2`, else
    /// `(1 + lambda)|w|`, for `w` a unit-variance t; then `z = (u - a)/b`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w = (self.t.sample(rng) * self.t_scale).abs();
        let u = if rng.random::<f64>() < (1.0 - self.lambda) / 2.0 {
            -(1.0 - self.lambda) * w
        } else {
            (1.0 + self.lambda) * w
        };
        (u - self.a) / self.b
    }
}

pub fn sample_skew_t<R: Rng + ?Sized>(df: f64, lambda: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let d = SkewT::new(df, lambda)?;
    Ok((0..n).map(|_| d.sample(rng)).collect())
}

/// RNG for replicate `rep` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Simulates a panel of `n_daily` days using `cfg.seed`.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<MixedFreqPanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_dgp_with(cfg, &mut rng)
}

pub fn simulate_dgp_with<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<MixedFreqPanel> {
    cfg.validate()?;
    let k = cfg.k_lags;
    let dpm = cfg.days_per_month;
    let burn_months = BURN_IN_DAYS.div_ceil(dpm);
    let daily_months = burn_months + cfg.n_daily.div_ceil(dpm);
    let mv_burn = 2 * k;
    let total_months = mv_burn + k + daily_months;

    let innov: Box<dyn Fn(&mut R) -> f64> = match cfg.mv_innovation {
        MvInnovation::Normal => Box::new(|r: &mut R| r.sample::<f64, _>(StandardNormal)),
        MvInnovation::SkewT { df, lambda } => {
            let d = SkewT::new(df, lambda)?;
            Box::new(move |r: &mut R| d.sample(r))
        }
    };
    let mut mv = Vec::with_capacity(total_months);
    let mut prev = 0.0;
    for _ in 0..total_months {
        prev = cfg.phi * prev + innov(rng);
        mv.push(prev);
    }
    let mv = &mv[mv_burn..];
    let ws = weighted_sums(mv, &beta_weights(k, 1.0, cfg.omega2)?);

    let q = cfg.q();
    let n_total = daily_months * dpm;
    let mut r = vec![0.0f64; n_total];
    let mut x = vec![0.0f64; n_total];
    let mut month = Vec::with_capacity(n_total);
    for i in 0..n_total {
        let t = k + i / dpm;
        month.push(t);
        let mut sigma = cfg.betas[0] + cfg.theta * ws[t].expect("K lags precede every daily month").abs();
        for j in 1..=q {
            if i >= j {
                sigma += cfg.betas[j] * r[i - j].abs();
            }
        }
        if i >= 1 {
            sigma += cfg.beta_x * x[i - 1].abs();
        }
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        r[i] = sigma * z;
        let s = cfg.x_log_sd;
        x[i] = sigma * (s * e - 0.5 * s * s).exp();
    }

    let keep = burn_months * dpm..burn_months * dpm + cfg.n_daily;
    let first = YearMonth::new(1950, 1)?.ordinal();
    let monthly = mv
        .iter()
        .enumerate()
        .map(|(t, v)| MonthlyObs::new(YearMonth::from_ordinal(first + t as i64), *v))
        .collect::<Result<Vec<_>>>()?;
    let daily = keep
        .map(|i| {
            let ym = YearMonth::from_ordinal(first + month[i] as i64);
            let date = NaiveDate::from_ymd_opt(ym.year, ym.month, (i % dpm) as u32 + 1)
                .expect("day of month within 1..=28");
            DailyObs::new(date, r[i], Some(x[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    build_panel(daily, monthly, k)
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub r_reps: usize,
    pub tau_levels: Vec<f64>,
    /// Largest lag tested; 0 skips the sequential test.
    pub q_max: usize,
    pub alpha: f64,
    pub omega2_grid: Vec<f64>,
    pub use_x: bool,
    /// Check the subgradient optimality certificate of every fit.
    pub verify_optimality: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            r_reps: 500,
            tau_levels: vec![0.05],
            q_max: 8,
            alpha: 0.05,
            omega2_grid: crate::mfqarch::default_omega2_grid(),
            use_x: false,
            verify_optimality: false,
        }
    }
}

/// Aggregates for one `tau`.
#[derive(Debug, Clone)]
pub struct McStudyResult {
    pub tau: f64,
    pub labels: Vec<String>,
    pub truth: Vec<f64>,
    /// Structural estimates, one row per successful replicate; `omega2`
    /// appended as the last column.
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub mse: Vec<f64>,
    /// Percentage of replicates not rejecting `beta_j = 0`, `j = 1..=q_max`.
    pub nonrejection_pct: Vec<f64>,
    pub failures: usize,
    /// Fits whose optimality certificate failed (when verification is on).
    pub certificate_failures: usize,
}

struct RepOutcome {
    per_tau: Vec<Result<(Vec<f64>, Vec<bool>, bool)>>,
}

/// Runs `r_reps` replicates; replicate `b` draws from the stream
/// `(cfg.seed, b)`, so results do not depend on thread scheduling.
pub fn run_mc_study(cfg: &DgpConfig, opts: &StudyOptions) -> Result<Vec<McStudyResult>> {
    cfg.validate()?;
    if opts.tau_levels.is_empty() {
        return Err(Error::Config("no tau levels".into()));
    }
    let q = cfg.q();
    let outcomes: Vec<RepOutcome> = (0..opts.r_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b as u64);
            let panel = match simulate_dgp_with(cfg, &mut rng) {
                Ok(p) => p,
                Err(e) => {
                    let msg = e.to_string();
                    return RepOutcome {
                        per_tau: opts
                            .tau_levels
                            .iter()
                            .map(|_| Err(Error::Estimation(msg.clone())))
                            .collect(),
                    };
                }
            };
            RepOutcome {
                per_tau: opts
                    .tau_levels
                    .iter()
                    .map(|&tau| replicate(&panel, cfg, opts, q, tau))
                    .collect(),
            }
        })
        .collect();

    let mut out = Vec::with_capacity(opts.tau_levels.len());
    for (k, &tau) in opts.tau_levels.iter().enumerate() {
        let mut spec_labels = MfqSpec::new(q, cfg.k_lags, true, opts.use_x, tau).labels();
        spec_labels.push("omega2".into());
        let mut truth = cfg.truth(opts.use_x);
        truth.push(cfg.omega2);

        let mut estimates = Vec::new();
        let mut keep = vec![0usize; opts.q_max];
        let mut tested = 0usize;
        let mut failures = 0;
        let mut cert_fail = 0;
        for (b, o) in outcomes.iter().enumerate() {
            match &o.per_tau[k] {
                Ok((est, nonrej, cert_ok)) => {
                    estimates.push(est.clone());
                    if !nonrej.is_empty() {
                        tested += 1;
                        for (j, nr) in nonrej.iter().enumerate() {
                            keep[j] += *nr as usize;
                        }
                    }
                    cert_fail += (!cert_ok) as usize;
                }
                Err(e) => {
                    log::warn!("replicate {b} at tau {tau} failed: {e}");
                    failures += 1;
                }
            }
        }
        if estimates.is_empty() {
            return Err(Error::Estimation(format!("every replicate failed at tau {tau}")));
        }
        let r = estimates.len() as f64;
        let p = truth.len();
        let mean: Vec<f64> = (0..p).map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / r).collect();
        let mse: Vec<f64> = (0..p)
            .map(|j| estimates.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / r)
            .collect();
        let nonrejection_pct = keep
            .iter()
            .map(|c| if tested > 0 { 100.0 * *c as f64 / tested as f64 } else { f64::NAN })
            .collect();
        out.push(McStudyResult {
            tau,
            labels: spec_labels,
            truth,
            estimates,
            mean,
            mse,
            nonrejection_pct,
            failures,
            certificate_failures: cert_fail,
        });
    }
    Ok(out)
}

fn replicate(
    panel: &MixedFreqPanel,
    cfg: &DgpConfig,
    opts: &StudyOptions,
    q: usize,
    tau: f64,
) -> Result<(Vec<f64>, Vec<bool>, bool)> {
    let spec = MfqSpec::new(q, cfg.k_lags, true, opts.use_x, tau).with_grid(opts.omega2_grid.clone());
    let model = fit_profiled(panel, &spec)?;
    let mut cert_ok = true;
    if opts.verify_optimality {
        let (y, x) = crate::mfqarch::build_design_range(
            panel,
            &spec,
            model.omega2_star.unwrap_or(1.0),
            model.rows.clone(),
        )?;
        cert_ok &= crate::qreg::verify_optimality(&y, &x, tau, &model.theta_star, 1e-8);
    }
    let mut est = rescale_to_structural(&model.theta_star, norm_ppf(tau))?;
    est.push(model.omega2_star.unwrap_or(f64::NAN));

    let nonrej = if opts.q_max > 0 {
        let template = MfqSpec::new(0, cfg.k_lags, true, opts.use_x, tau).with_grid(opts.omega2_grid.clone());
        let report = sequential_lag_test(panel, &template, tau, opts.q_max, opts.alpha)?;
        if opts.verify_optimality {
            for m in &report.models {
                let (y, x) = crate::mfqarch::build_design_range(
                    panel,
                    &m.spec,
                    m.omega2_star.unwrap_or(1.0),
                    m.rows.clone(),
                )?;
                cert_ok &= crate::qreg::verify_optimality(&y, &x, tau, &m.theta_star, 1e-8);
            }
        }
        report.tests.iter().map(|t| t.p_value >= opts.alpha).collect()
    } else {
        Vec::new()
    };
    Ok((est, nonrej, cert_ok))
}

/// CSV in the layout of a Monte Carlo estimates table: one row per
/// coefficient with the true value, then mean and MSE per sample size.
pub fn write_estimates_csv(path: &std::path::Path, by_n: &[(usize, McStudyResult)]) -> Result<()> {
    let Some((_, first)) = by_n.first() else {
        return Err(Error::InvalidInput("no study results".into()));
    };
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["coef".to_string(), "gamma0".into()];
    for (n, _) in by_n {
        header.push(format!("mean_n{n}"));
        header.push(format!("mse_n{n}"));
    }
    w.write_record(&header)?;
    for (j, label) in first.labels.iter().enumerate() {
        let mut row = vec![label.clone(), format!("{:.3}", first.truth[j])];
        for (_, res) in by_n {
            row.push(format!("{:.3}", res.mean[j]));
            row.push(format!("{:.3}", res.mse[j]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of non-rejection percentages: one row per tested lag, one column
/// per sample size.
pub fn write_lagtest_csv(path: &std::path::Path, by_n: &[(usize, McStudyResult)]) -> Result<()> {
    let Some((_, first)) = by_n.first() else {
        return Err(Error::InvalidInput("no study results".into()));
    };
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["null".to_string()];
    header.extend(by_n.iter().map(|(n, _)| format!("n{n}")));
    w.write_record(&header)?;
    for j in 0..first.nonrejection_pct.len() {
        let mut row = vec![format!("beta{}=0", j + 1)];
        row.extend(by_n.iter().map(|(_, r)| format!("{:.3}", r.nonrejection_pct[j])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(x: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let s = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n / v.powf(1.5);
        (m, v, s)
    }

    #[test]
    fn skew_t_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, v, s) = moments(&sample_skew_t(7.0, 0.0, 100_000, &mut rng).unwrap());
        assert!(s.abs() < 0.1, "{s}");
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.03);

        let (_, _, s) = moments(&sample_skew_t(7.0, -0.5, 100_000, &mut rng).unwrap());
        assert!(s < -0.5, "{s}");
    }

    #[test]
    fn skew_t_is_standardized_at_default_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, v, s) = moments(&sample_skew_t(7.0, DEFAULT_SKEW_LAMBDA, 1_000_000, &mut rng).unwrap());
        assert!(m.abs() < 0.01, "{m}");
        assert!((v - 1.0).abs() < 0.01, "{v}");
        assert!(s < -1.0, "{s}");
    }

    #[test]
    fn skew_t_rejects_bad_parameters() {
        assert!(SkewT::new(2.0, 0.0).is_err());
        assert!(SkewT::new(5.0, 1.0).is_err());
    }

    #[test]
    fn default_dgp_is_stationary_and_deterministic() {
        let cfg = DgpConfig {
            n_daily: 800,
            ..DgpConfig::default()
        };
        cfg.validate().unwrap();
        let a = simulate_dgp(&cfg).unwrap();
        let b = simulate_dgp(&cfg).unwrap();
        assert_eq!(a.len(), 800);
        assert_eq!(a.returns(), b.returns());
        assert_eq!(a.monthly_values(), b.monthly_values());
    }

    #[test]
    fn degenerate_dgp_is_scaled_noise() {
        let cfg = DgpConfig {
            betas: vec![0.7],
            theta: 0.0,
            n_daily: 2000,
            ..DgpConfig::default()
        };
        let p = simulate_dgp(&cfg).unwrap();
        for d in p.daily() {
            let sigma = d.x.unwrap() / 1.0;
            assert!(sigma > 0.0);
        }
        let (m, v, _) = moments(&p.returns());
        assert!(m.abs() < 3.0 * 0.7 / (2000f64).sqrt());
        assert!((v.sqrt() - 0.7).abs() < 0.05);
    }

    #[test]
    fn nonstationary_dgp_is_rejected() {
        let cfg = DgpConfig {
            betas: vec![0.05, 0.6, 0.5],
            ..DgpConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
