//! Run configuration, read from a TOML file.
//!
//! ```toml
//! tau = 0.05
//! seed = 7
//! q = "auto"          # or an integer
//! oos_start = "2012-01-03"
//! models = ["mfqarchx", "garch", "sav"]
//!
//! [paths]
//! daily = "daily.csv"
//! monthly = "monthly.csv"
//!
//! [model.sav]
//! n_starts = 2000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use mfq_core::competitors::CaviarOptions;
use mfq_core::forecast::{LagChoice, ModelKind, RollingSettings, MIN_WINDOW};
use mfq_core::mcs::McsOptions;
use mfq_core::mfqarch::{default_omega2_grid, log_grid};
use mfq_core::simulate::{DgpConfig, MvInnovation, StudyOptions, DEFAULT_SKEW_LAMBDA};
use mfq_core::timegrid::ReturnUnit;
use mfq_core::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum QSetting {
    Fixed(usize),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub daily: Option<PathBuf>,
    pub monthly: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            daily: None,
            monthly: None,
            out: default_out(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSetting {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Options that may be set per model in a `[model.<name>]` table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    pub q: Option<QSetting>,
    pub omega2_grid: Option<GridSetting>,
    pub n_starts: Option<usize>,
    pub n_refine: Option<usize>,
    /// Label of the low-frequency variable shown in reports.
    pub lf_var: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsSection {
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_block")]
    pub block_len: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

fn default_n_boot() -> usize {
    5000
}
fn default_block() -> usize {
    10
}
fn default_levels() -> Vec<f64> {
    vec![0.75, 0.90]
}

impl Default for McsSection {
    fn default() -> Self {
        Self {
            n_boot: default_n_boot(),
            block_len: default_block(),
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub betas: Vec<f64>,
    pub theta: f64,
    pub omega2: f64,
    pub k_lags: usize,
    pub phi: f64,
    /// `"skew_t"` or `"normal"`.
    pub mv_innovation: String,
    pub df: f64,
    pub lambda: f64,
    pub days_per_month: usize,
    pub beta_x: f64,
    pub x_log_sd: f64,
    /// Length of the single panel written for the forecasting pipeline.
    pub n_daily: usize,
    /// Monte Carlo replicates; 0 writes the panel only.
    pub r_reps: usize,
    pub sample_sizes: Vec<usize>,
    pub tau_levels: Vec<f64>,
    pub q_max: usize,
    pub omega2_grid: Option<GridSetting>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let d = DgpConfig::default();
        Self {
            betas: d.betas,
            theta: d.theta,
            omega2: d.omega2,
            k_lags: d.k_lags,
            phi: d.phi,
            mv_innovation: "skew_t".into(),
            df: 7.0,
            lambda: DEFAULT_SKEW_LAMBDA,
            days_per_month: d.days_per_month,
            beta_x: d.beta_x,
            x_log_sd: d.x_log_sd,
            n_daily: d.n_daily,
            r_reps: 0,
            sample_sizes: vec![1250, 2500, 5000],
            tau_levels: vec![0.01, 0.05, 0.10],
            q_max: 8,
            omega2_grid: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tau: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_q")]
    pub q: QSetting,
    #[serde(default = "default_q_max")]
    pub q_max: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k_lags: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub oos_start: Option<NaiveDate>,
    #[serde(default)]
    pub return_unit: ReturnUnit,
    #[serde(default = "default_dq_lags")]
    pub dq_lags: usize,
    /// Label of the low-frequency variable for MIDAS models.
    #[serde(default = "default_lf_var")]
    pub lf_var: String,
    pub models: Option<Vec<String>>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub model: BTreeMap<String, ModelOptions>,
    #[serde(default)]
    pub mcs: McsSection,
    #[serde(default)]
    pub simulate: SimulateSection,

    /// SHA-256 of the configuration text, filled in by [`RunConfig::load`].
    #[serde(skip)]
    pub hash: String,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_q() -> QSetting {
    QSetting::Keyword("auto".into())
}
fn default_q_max() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.05
}
fn default_k() -> usize {
    12
}
fn default_window() -> usize {
    1500
}
fn default_stride() -> usize {
    10
}
fn default_dq_lags() -> usize {
    4
}
fn default_lf_var() -> String {
    "MV".into()
}

fn lag_choice(q: &QSetting, q_max: usize) -> Result<LagChoice> {
    match q {
        QSetting::Fixed(v) => Ok(LagChoice::Fixed(*v)),
        QSetting::Keyword(s) if s == "auto" => Ok(LagChoice::Auto { q_max }),
        QSetting::Keyword(s) => Err(Error::Config(format!("q must be an integer or \"auto\", got \"{s}\""))),
    }
}

fn grid(g: &Option<GridSetting>) -> Result<Vec<f64>> {
    match g {
        None => Ok(default_omega2_grid()),
        Some(g) => {
            if !(g.min >= 1.0 && g.max >= g.min && g.points >= 1) {
                return Err(Error::Config("omega2_grid needs 1 <= min <= max and points >= 1".into()));
            }
            Ok(log_grid(g.min, g.max, g.points))
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.window < MIN_WINDOW {
            return Err(Error::Config(format!("window must be at least {MIN_WINDOW}")));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.q_max == 0 {
            return Err(Error::Config("q_max must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        lag_choice(&self.q, self.q_max)?;
        self.model_kinds()?;
        for (name, opts) in &self.model {
            name.parse::<ModelKind>()?;
            if let Some(q) = &opts.q {
                lag_choice(q, self.q_max)?;
            }
            grid(&opts.omega2_grid)?;
        }
        if self.mcs.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("MCS levels must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        match &self.models {
            None => Ok(ModelKind::ALL.to_vec()),
            Some(list) if list.is_empty() => Err(Error::Config("model list is empty".into())),
            Some(list) => {
                let mut out: Vec<ModelKind> = Vec::with_capacity(list.len());
                for s in list {
                    let k = s.parse()?;
                    if out.contains(&k) {
                        return Err(Error::Config(format!("model '{s}' listed twice")));
                    }
                    out.push(k);
                }
                Ok(out)
            }
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out)
    }

    pub fn lf_var(&self, kind: ModelKind) -> String {
        match kind {
            ModelKind::MfqArchX | ModelKind::MfqArch | ModelKind::GarchMidas => self
                .model
                .get(kind.name())
                .and_then(|o| o.lf_var.clone())
                .unwrap_or_else(|| self.lf_var.clone()),
            _ => "-".into(),
        }
    }

    /// Rolling settings for one model, with its overrides applied.
    pub fn rolling_settings(&self, kind: ModelKind, oos_start: usize) -> Result<RollingSettings> {
        let opts = self.model.get(kind.name()).cloned().unwrap_or_default();
        let defaults = CaviarOptions::default();
        Ok(RollingSettings {
            tau: self.tau,
            q: lag_choice(opts.q.as_ref().unwrap_or(&self.q), self.q_max)?,
            alpha: self.alpha,
            k_lags: self.k_lags,
            window: self.window,
            stride: self.stride,
            oos_start,
            oos_len: None,
            omega2_grid: grid(&opts.omega2_grid)?,
            caviar: CaviarOptions {
                n_starts: opts.n_starts.unwrap_or(defaults.n_starts),
                n_refine: opts.n_refine.unwrap_or(defaults.n_refine),
                seed: self.seed,
                ..defaults
            },
        })
    }

    pub fn mcs_options(&self) -> McsOptions {
        McsOptions {
            n_boot: self.mcs.n_boot,
            block_len: self.mcs.block_len,
            seed: self.seed,
            deltas: self.mcs.levels.iter().map(|c| 1.0 - c).collect(),
        }
    }

    pub fn dgp(&self) -> Result<DgpConfig> {
        let s = &self.simulate;
        let mv_innovation = match s.mv_innovation.as_str() {
            "skew_t" => MvInnovation::SkewT {
                df: s.df,
                lambda: s.lambda,
            },
            "normal" => MvInnovation::Normal,
            other => {
                return Err(Error::Config(format!(
                    "mv_innovation must be \"skew_t\" or \"normal\", got \"{other}\""
                )))
            }
        };
        let cfg = DgpConfig {
            betas: s.betas.clone(),
            theta: s.theta,
            omega2: s.omega2,
            k_lags: s.k_lags,
            phi: s.phi,
            mv_innovation,
            n_daily: s.n_daily,
            days_per_month: s.days_per_month,
            seed: self.seed,
            beta_x: s.beta_x,
            x_log_sd: s.x_log_sd,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn study_options(&self) -> Result<StudyOptions> {
        let s = &self.simulate;
        Ok(StudyOptions {
            r_reps: s.r_reps,
            tau_levels: s.tau_levels.clone(),
            q_max: s.q_max,
            alpha: self.alpha,
            omega2_grid: grid(&s.omega2_grid)?,
            use_x: false,
            verify_optimality: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse("tau = 0.05").unwrap();
        assert_eq!(c.window, 1500);
        assert_eq!(c.stride, 10);
        assert_eq!(c.k_lags, 12);
        assert_eq!(c.model_kinds().unwrap().len(), 12);
        assert!(matches!(
            c.rolling_settings(ModelKind::MfqArch, 2000).unwrap().q,
            LagChoice::Auto { q_max: 10 }
        ));
    }

    #[test]
    fn per_model_overrides() {
        let c = RunConfig::parse(
            "tau = 0.01\nq = 3\nmodels = [\"sav\", \"qarch\"]\n[model.sav]\nn_starts = 50\n[model.qarch]\nq = 1\n",
        )
        .unwrap();
        assert_eq!(c.rolling_settings(ModelKind::Sav, 2000).unwrap().caviar.n_starts, 50);
        assert_eq!(c.rolling_settings(ModelKind::QArch, 2000).unwrap().q, LagChoice::Fixed(1));
        assert_eq!(c.rolling_settings(ModelKind::Sav, 2000).unwrap().q, LagChoice::Fixed(3));
    }

    #[test]
    fn invalid_configs() {
        for text in [
            "tau = 1.5",
            "tau = 0.05\nwindow = 200",
            "tau = 0.05\nstride = 0",
            "tau = 0.05\nq_max = 0",
            "tau = 0.05\nq = \"many\"",
            "tau = 0.05\nmodels = [\"egarch\"]",
            "tau = 0.05\nwindo = 1500",
            "tau = 0.05\n[model.nope]\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_tracks_text() {
        let a = RunConfig::parse("tau = 0.05").unwrap();
        let b = RunConfig::parse("tau = 0.05\n").unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }
}
