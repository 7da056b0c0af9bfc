//! Rolling-window one-step-ahead VaR forecasting for every model in the
//! comparison set.
//!
//! Refits happen on the first out-of-sample day and then every `stride`
//! days, each on the `window` observations strictly before the refit day.
//! Between refits the latest parameters are filtered forward.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::backtest::{VarRecord, VarTrack};
use crate::competitors::{
    fit_caviar_with, fit_garch, fit_garch_midas, riskmetrics_path, CaviarModel, CaviarOptions, CaviarVariant,
    GarchDist, GarchFamily, GarchMidasModel, GarchModel,
};
use crate::error::{Error, Result};
use crate::mfqarch::{default_omega2_grid, fit_profiled_range, MfqArchModel, MfqSpec};
use crate::qreg::sequential_lag_test;
use crate::stats::{norm_ppf, variance};
use crate::timegrid::MixedFreqPanel;

/// Smallest admissible estimation window.
pub const MIN_WINDOW: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    MfqArchX,
    MfqArch,
    QArch,
    Sav,
    As,
    Ig,
    Garch,
    GarchT,
    Gjr,
    GjrT,
    RiskMetrics,
    GarchMidas,
}

impl ModelKind {
    pub const ALL: [ModelKind; 12] = [
        ModelKind::MfqArchX,
        ModelKind::MfqArch,
        ModelKind::QArch,
        ModelKind::Sav,
        ModelKind::As,
        ModelKind::Ig,
        ModelKind::Garch,
        ModelKind::GarchT,
        ModelKind::Gjr,
        ModelKind::GjrT,
        ModelKind::RiskMetrics,
        ModelKind::GarchMidas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MfqArchX => "mfqarchx",
            ModelKind::MfqArch => "mfqarch",
            ModelKind::QArch => "qarch",
            ModelKind::Sav => "sav",
            ModelKind::As => "as",
            ModelKind::Ig => "ig",
            ModelKind::Garch => "garch",
            ModelKind::GarchT => "garch_t",
            ModelKind::Gjr => "gjr",
            ModelKind::GjrT => "gjr_t",
            ModelKind::RiskMetrics => "riskmetrics",
            ModelKind::GarchMidas => "garch_midas",
        }
    }

    /// Display label in the style of published backtest tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::MfqArchX => "MF-Q-ARCH-X",
            ModelKind::MfqArch => "MF-Q-ARCH",
            ModelKind::QArch => "Q-ARCH",
            ModelKind::Sav => "SAV",
            ModelKind::As => "AS",
            ModelKind::Ig => "IG",
            ModelKind::Garch => "GARCH",
            ModelKind::GarchT => "GARCH-t",
            ModelKind::Gjr => "GJR",
            ModelKind::GjrT => "GJR-t",
            ModelKind::RiskMetrics => "RiskMetrics",
            ModelKind::GarchMidas => "GARCH-MIDAS",
        }
    }

    fn quantile_arch(self) -> Option<(bool, bool)> {
        match self {
            ModelKind::MfqArchX => Some((true, true)),
            ModelKind::MfqArch => Some((true, false)),
            ModelKind::QArch => Some((false, false)),
            _ => None,
        }
    }

    pub fn needs_x(self) -> bool {
        self == ModelKind::MfqArchX
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))
    }
}

/// Number of daily lags in the quantile ARCH models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagChoice {
    Fixed(usize),
    /// Chosen by the sequential LR test on the first estimation window.
    Auto { q_max: usize },
}

#[derive(Debug, Clone)]
pub struct RollingSettings {
    pub tau: f64,
    pub q: LagChoice,
    pub alpha: f64,
    pub k_lags: usize,
    pub window: usize,
    pub stride: usize,
    /// Daily position of the first forecast.
    pub oos_start: usize,
    /// Number of forecast days; `None` runs to the end of the panel.
    pub oos_len: Option<usize>,
    pub omega2_grid: Vec<f64>,
    pub caviar: CaviarOptions,
}

impl RollingSettings {
    pub fn new(tau: f64, oos_start: usize) -> Self {
        Self {
            tau,
            q: LagChoice::Fixed(1),
            alpha: 0.05,
            k_lags: 12,
            window: 1500,
            stride: 10,
            oos_start,
            oos_len: None,
            omega2_grid: default_omega2_grid(),
            caviar: CaviarOptions::default(),
        }
    }

    fn oos_end(&self, n: usize) -> usize {
        self.oos_len.map_or(n, |l| (self.oos_start + l).min(n))
    }

    pub fn validate(&self, panel: &MixedFreqPanel) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.window < MIN_WINDOW {
            return Err(Error::Config(format!("window must be at least {MIN_WINDOW}, got {}", self.window)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.oos_start >= panel.len() {
            return Err(Error::Config(format!(
                "out-of-sample start {} lies beyond the {} available days",
                self.oos_start,
                panel.len()
            )));
        }
        if self.oos_start < self.window {
            return Err(Error::InsufficientHistory(format!(
                "{} days precede the out-of-sample start, the window needs {}",
                self.oos_start, self.window
            )));
        }
        if let LagChoice::Auto { q_max } = self.q {
            if q_max == 0 {
                return Err(Error::Config("q_max must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Parameters of whichever model is being rolled forward.
#[derive(Debug, Clone)]
enum Fitted {
    Quantile(Box<MfqArchModel>),
    Caviar(CaviarModel),
    Garch(GarchModel),
    RiskMetrics { h1: f64 },
    GarchMidas(GarchMidasModel),
}

#[derive(Debug, Clone)]
pub struct ForecastOutput {
    pub model: ModelKind,
    pub track: VarTrack,
    /// Days on which a refit was attempted.
    pub refit_days: Vec<usize>,
    pub failed_refits: usize,
    /// Daily lags used by the quantile ARCH models.
    pub q_used: Option<usize>,
}

/// Selects `q` by the sequential test on the window before `oos_start`.
pub fn select_q(panel: &MixedFreqPanel, settings: &RollingSettings, use_x: bool) -> Result<usize> {
    match settings.q {
        LagChoice::Fixed(q) => Ok(q),
        LagChoice::Auto { q_max } => {
            let start = settings.oos_start - settings.window;
            let sub = panel.slice(start..settings.oos_start);
            let template = MfqSpec::new(0, settings.k_lags, true, use_x, settings.tau)
                .with_grid(settings.omega2_grid.clone());
            Ok(sequential_lag_test(&sub, &template, settings.tau, q_max, settings.alpha)?.selected_q)
        }
    }
}

fn fit_at(
    kind: ModelKind,
    panel: &MixedFreqPanel,
    returns: &[f64],
    settings: &RollingSettings,
    q: usize,
    day: usize,
) -> Result<Fitted> {
    let start = day - settings.window;
    let win = &returns[start..day];
    let tau = settings.tau;
    Ok(match kind {
        ModelKind::MfqArchX | ModelKind::MfqArch | ModelKind::QArch => {
            let (midas, x) = kind.quantile_arch().unwrap();
            let spec = MfqSpec::new(q, settings.k_lags, midas, x, tau).with_grid(settings.omega2_grid.clone());
            Fitted::Quantile(Box::new(fit_profiled_range(panel, &spec, start..day)?))
        }
        ModelKind::Sav | ModelKind::As | ModelKind::Ig => {
            let variant = match kind {
                ModelKind::Sav => CaviarVariant::Sav,
                ModelKind::As => CaviarVariant::As,
                _ => CaviarVariant::Ig,
            };
            Fitted::Caviar(fit_caviar_with(win, tau, variant, &settings.caviar)?)
        }
        ModelKind::Garch | ModelKind::GarchT | ModelKind::Gjr | ModelKind::GjrT => {
            let family = match kind {
                ModelKind::Garch | ModelKind::GarchT => GarchFamily::Garch,
                _ => GarchFamily::Gjr,
            };
            let dist = match kind {
                ModelKind::GarchT | ModelKind::GjrT => GarchDist::StudentT,
                _ => GarchDist::Normal,
            };
            Fitted::Garch(fit_garch(win, family, dist)?)
        }
        ModelKind::RiskMetrics => Fitted::RiskMetrics { h1: variance(win) },
        ModelKind::GarchMidas => {
            Fitted::GarchMidas(fit_garch_midas(&panel.slice(start..day), settings.k_lags)?)
        }
    })
}

/// VaR for `day` with parameters estimated on the window ending at
/// `fit_day`; the filter runs over returns from the window start to `day - 1`.
fn forecast_at(
    fitted: &Fitted,
    panel: &MixedFreqPanel,
    returns: &[f64],
    settings: &RollingSettings,
    fit_day: usize,
    day: usize,
) -> Result<f64> {
    let start = fit_day - settings.window;
    let past = &returns[start..day];
    let tau = settings.tau;
    match fitted {
        Fitted::Quantile(m) => m.predict_var(panel, day),
        Fitted::Caviar(m) => m.forecast(past),
        Fitted::Garch(m) => Ok(m.forecast(past, tau)),
        Fitted::RiskMetrics { h1 } => Ok(riskmetrics_path(past, *h1).last().unwrap().sqrt() * norm_ppf(tau)),
        Fitted::GarchMidas(m) => m.forecast(panel, start, day, tau),
    }
}

/// Rolls one model through the out-of-sample period.
///
/// A failed refit keeps the previous parameters (and is logged); a failure
/// of the very first fit is returned as an error.
pub fn rolling_forecast(panel: &MixedFreqPanel, kind: ModelKind, settings: &RollingSettings) -> Result<ForecastOutput> {
    settings.validate(panel)?;
    if kind.needs_x() && !panel.has_x() {
        return Err(Error::Config(format!("{kind} needs a realized measure column")));
    }
    let q_used = match kind.quantile_arch() {
        Some((_, x)) => Some(select_q(panel, settings, x)?),
        None => None,
    };
    let returns = panel.returns();
    let end = settings.oos_end(panel.len());
    let mut refit_days = Vec::new();
    let mut failed = 0;
    let mut current: Option<(usize, Fitted)> = None;
    let mut records = Vec::with_capacity(end - settings.oos_start);
    for day in settings.oos_start..end {
        if (day - settings.oos_start) % settings.stride == 0 {
            refit_days.push(day);
            match fit_at(kind, panel, &returns, settings, q_used.unwrap_or(0), day) {
                Ok(f) => current = Some((day, f)),
                Err(e) if current.is_none() => {
                    return Err(Error::Estimation(format!("{kind}: first fit at {} failed: {e}", panel.date(day))))
                }
                Err(e) => {
                    failed += 1;
                    log::warn!("{kind}: refit at {} failed, keeping previous parameters: {e}", panel.date(day));
                }
            }
        }
        let (fit_day, fitted) = current.as_ref().expect("first fit succeeded");
        let var = forecast_at(fitted, panel, &returns, settings, *fit_day, day)?;
        if !var.is_finite() {
            return Err(Error::Estimation(format!("{kind}: non-finite VaR on {}", panel.date(day))));
        }
        records.push(VarRecord::new(panel.date(day), returns[day], var));
    }
    Ok(ForecastOutput {
        model: kind,
        track: VarTrack::new(settings.tau, records)?,
        refit_days,
        failed_refits: failed,
        q_used,
    })
}

/// Rolls several models in parallel; results keep the input order.
pub fn rolling_forecasts(
    panel: &MixedFreqPanel,
    kinds: &[ModelKind],
    settings: &RollingSettings,
) -> Vec<(ModelKind, Result<ForecastOutput>)> {
    kinds
        .par_iter()
        .map(|&k| (k, rolling_forecast(panel, k, settings)))
        .collect()
}
