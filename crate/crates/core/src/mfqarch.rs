//! MF-Q-ARCH(-X): design construction, estimation with the MIDAS decay
//! parameter profiled over a grid, VaR prediction and the stationarity
//! diagnostic.
//!
//! The conditional `tau`-quantile of the daily return is modelled as
//!
//! ```text
//! Q(tau | F) = b0 + th |WS_{t-1}| + b1 |r_{i-1}| + ... + bq |r_{i-q}| + bx |X_{i-1}|
//! ```
//!
//! where `WS_{t-1}` is the Beta-weighted sum of the `K` monthly values before
//! the current month. The weights depend on `omega2`, which is fixed on a
//! grid; each grid point is an ordinary linear quantile regression.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::midas::{beta_weights, weighted_sums, BetaWeights};
use crate::qreg::{self, FitOptions, QuantileFit};
use crate::timegrid::MixedFreqPanel;

/// Model layout. Set `use_midas = false` and `use_x = false` for a plain
/// quantile ARCH.
#[derive(Debug, Clone, PartialEq)]
pub struct MfqSpec {
    pub q: usize,
    pub k_lags: usize,
    pub use_midas: bool,
    pub use_x: bool,
    pub tau: f64,
    pub omega2_grid: Vec<f64>,
}

/// 100 log-spaced points on `[1.001, 50]`.
pub fn default_omega2_grid() -> Vec<f64> {
    log_grid(1.001, 50.0, 100)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl MfqSpec {
    pub fn new(q: usize, k_lags: usize, use_midas: bool, use_x: bool, tau: f64) -> Self {
        Self {
            q,
            k_lags,
            use_midas,
            use_x,
            tau,
            omega2_grid: default_omega2_grid(),
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.omega2_grid = grid;
        self
    }

    pub fn with_q(&self, q: usize) -> Self {
        Self { q, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.k_lags == 0 {
            return Err(Error::Config("k_lags must be at least 1".into()));
        }
        if self.use_midas {
            if self.omega2_grid.is_empty() {
                return Err(Error::Config("omega2 grid is empty".into()));
            }
            if let Some(bad) = self.omega2_grid.iter().find(|w| !(**w >= 1.0) || !w.is_finite()) {
                return Err(Error::Config(format!("omega2 grid value {bad} is below 1")));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        1 + self.use_midas as usize + self.q + self.use_x as usize
    }

    /// First daily position with every regressor available.
    pub fn first_row(&self) -> usize {
        self.q.max(self.use_x as usize)
    }

    /// Coefficient labels in design order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec!["beta0".to_string()];
        if self.use_midas {
            out.push("theta".into());
        }
        out.extend((1..=self.q).map(|j| format!("beta{j}")));
        if self.use_x {
            out.push("beta_x".into());
        }
        out
    }

    fn sorted_grid(&self) -> Vec<f64> {
        let mut g = self.omega2_grid.clone();
        g.sort_by(|a, b| a.total_cmp(b));
        g.dedup();
        g
    }
}

fn check_panel(panel: &MixedFreqPanel, spec: &MfqSpec) -> Result<()> {
    spec.validate()?;
    if spec.use_x && !panel.has_x() {
        return Err(Error::Config(
            "the -X term needs a realized measure column in the daily data".into(),
        ));
    }
    Ok(())
}

/// `|WS_{t-1}|` for every daily position (`None` where history is short).
fn ws_column(panel: &MixedFreqPanel, w: &BetaWeights) -> Vec<Option<f64>> {
    let per_month = weighted_sums(&panel.monthly_values(), w);
    (0..panel.len())
        .map(|pos| per_month[panel.month_of(pos)].map(f64::abs))
        .collect()
}

/// Regressor vector at daily position `pos`, in design order.
pub fn regressor(
    panel: &MixedFreqPanel,
    spec: &MfqSpec,
    omega2: Option<f64>,
    pos: usize,
) -> Result<Vec<f64>> {
    check_panel(panel, spec)?;
    if pos > panel.len() || pos < spec.first_row() {
        return Err(Error::InsufficientHistory(format!(
            "position {pos} lacks the daily history the model needs"
        )));
    }
    let mut x = Vec::with_capacity(spec.n_params());
    x.push(1.0);
    if spec.use_midas {
        let w = beta_weights(spec.k_lags, 1.0, omega2.unwrap_or(1.0))?;
        // the month of `pos`; a forecast for the day after the panel's end
        // uses the last day's month
        let t = if pos < panel.len() {
            panel.month_of(pos)
        } else {
            panel.month_of(pos - 1)
        };
        let ws = crate::midas::weighted_sum_values(&panel.monthly_values(), t, &w)?;
        x.push(ws.abs());
    }
    x.extend(panel.lagged_returns(pos, spec.q)?);
    if spec.use_x {
        x.push(panel.daily()[pos - 1].x.unwrap_or(0.0));
    }
    Ok(x)
}

/// Response and design over the default rows `first_row()..len`.
pub fn build_design(
    panel: &MixedFreqPanel,
    spec: &MfqSpec,
    omega2: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    build_design_range(panel, spec, omega2, spec.first_row()..panel.len())
}

pub fn build_design_range(
    panel: &MixedFreqPanel,
    spec: &MfqSpec,
    omega2: f64,
    rows: std::ops::Range<usize>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_panel(panel, spec)?;
    if rows.start < spec.first_row() || rows.end > panel.len() || rows.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "rows {rows:?} unavailable for q = {} on a panel of {} days",
            spec.q,
            panel.len()
        )));
    }
    let ws = if spec.use_midas {
        Some(ws_column(panel, &beta_weights(spec.k_lags, 1.0, omega2)?))
    } else {
        None
    };
    let n = rows.len();
    let p = spec.n_params();
    let daily = panel.daily();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for (row, pos) in rows.enumerate() {
        y.push(daily[pos].ret);
        let mut c = 0;
        x[(row, c)] = 1.0;
        c += 1;
        if let Some(ws) = &ws {
            x[(row, c)] = ws[pos].ok_or_else(|| {
                Error::InsufficientHistory(format!(
                    "{} lacks {} monthly lags",
                    panel.date(pos),
                    spec.k_lags
                ))
            })?;
            c += 1;
        }
        for j in 1..=spec.q {
            x[(row, c)] = daily[pos - j].ret.abs();
            c += 1;
        }
        if spec.use_x {
            x[(row, c)] = daily[pos - 1].x.unwrap_or(0.0);
        }
    }
    Ok((y, x))
}

/// Profiled fit.
#[derive(Debug, Clone)]
pub struct MfqArchModel {
    pub spec: MfqSpec,
    pub theta_star: Vec<f64>,
    /// `None` when the model has no MIDAS term.
    pub omega2_star: Option<f64>,
    pub loss_star: f64,
    /// Sorted grid and the loss at each point (`NaN` where the fit failed).
    pub grid: Vec<f64>,
    pub grid_losses: Vec<f64>,
    pub failed_grid_points: usize,
    pub fit: QuantileFit,
    pub rows: std::ops::Range<usize>,
}

pub fn fit_profiled(panel: &MixedFreqPanel, spec: &MfqSpec) -> Result<MfqArchModel> {
    fit_profiled_range(panel, spec, spec.first_row()..panel.len())
}

/// Profiled fit on an explicit range of daily rows.
///
/// Grid points are visited in increasing order and each fit is warm-started
/// from the previous optimal basis; only the `|WS|` column changes between
/// points.
pub fn fit_profiled_range(
    panel: &MixedFreqPanel,
    spec: &MfqSpec,
    rows: std::ops::Range<usize>,
) -> Result<MfqArchModel> {
    check_panel(panel, spec)?;
    let grid = if spec.use_midas {
        spec.sorted_grid()
    } else {
        vec![1.0]
    };
    let (y, mut x) = build_design_range(panel, spec, grid[0], rows.clone())?;

    let mut losses = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, QuantileFit)> = None;
    let mut warm: Option<Vec<usize>> = None;
    let mut failed = 0;
    let mut last_err = None;
    for (g, &omega2) in grid.iter().enumerate() {
        if g > 0 {
            let ws = ws_column(panel, &beta_weights(spec.k_lags, 1.0, omega2)?);
            for (row, pos) in rows.clone().enumerate() {
                x[(row, 1)] = ws[pos].expect("history checked when the design was built");
            }
        }
        let opts = FitOptions {
            warm_basis: warm.clone(),
            ..FitOptions::default()
        };
        match qreg::fit_with(&y, &x, spec.tau, &opts) {
            Ok(f) => {
                losses.push(f.loss);
                warm = Some(f.basis.clone());
                if best.as_ref().is_none_or(|(_, b)| f.loss < b.loss) {
                    best = Some((g, f));
                }
            }
            Err(e) => {
                failed += 1;
                losses.push(f64::NAN);
                last_err = Some(e);
            }
        }
    }
    if failed > 0 {
        log::warn!("{failed} of {} grid fits failed", grid.len());
    }
    let (g, fit) = best.ok_or_else(|| {
        Error::Estimation(format!(
            "every grid fit failed; last error: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })?;
    Ok(MfqArchModel {
        spec: spec.clone(),
        theta_star: fit.theta.clone(),
        omega2_star: spec.use_midas.then_some(grid[g]),
        loss_star: fit.loss,
        grid,
        grid_losses: losses,
        failed_grid_points: failed,
        fit,
        rows,
    })
}

impl MfqArchModel {
    pub fn regressor(&self, panel: &MixedFreqPanel, pos: usize) -> Result<Vec<f64>> {
        regressor(panel, &self.spec, self.omega2_star, pos)
    }

    /// VaR for daily position `pos`, using information up to `pos - 1`.
    /// `pos == panel.len()` forecasts the day after the panel.
    pub fn predict_var(&self, panel: &MixedFreqPanel, pos: usize) -> Result<f64> {
        let x = self.regressor(panel, pos)?;
        Ok(dot(&x, &self.theta_star))
    }

    pub fn in_sample_var(&self, panel: &MixedFreqPanel) -> Result<Vec<f64>> {
        let (_, x) = build_design_range(
            panel,
            &self.spec,
            self.omega2_star.unwrap_or(1.0),
            self.rows.clone(),
        )?;
        Ok((0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * self.theta_star[j]).sum())
            .collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divides quantile-scale coefficients by the innovation quantile `F^{-1}(tau)`.
pub fn rescale_to_structural(theta: &[f64], innovation_quantile: f64) -> Result<Vec<f64>> {
    if innovation_quantile.abs() < 1e-12 || !innovation_quantile.is_finite() {
        return Err(Error::ZeroQuantile);
    }
    Ok(theta.iter().map(|v| v / innovation_quantile).collect())
}

/// Absolute moment of the innovation used in the stationarity condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZMoment {
    /// `E|z|`.
    First(f64),
    /// `E z^2`.
    Second(f64),
}

impl ZMoment {
    pub fn standard_normal_first() -> Self {
        ZMoment::First((2.0 / std::f64::consts::PI).sqrt())
    }

    pub fn value(self) -> f64 {
        match self {
            ZMoment::First(v) | ZMoment::Second(v) => v,
        }
    }

    pub fn order(self) -> u8 {
        match self {
            ZMoment::First(_) => 1,
            ZMoment::Second(_) => 2,
        }
    }
}

impl Default for ZMoment {
    fn default() -> Self {
        ZMoment::Second(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub spectral_radius: f64,
    pub stationary: bool,
    pub z_r: f64,
    pub r_moment: u8,
}

/// Companion matrix of the absolute-return recursion. The state is
/// `(|r_{i-1}|, ..., |r_{i-q}|, |WS|, |X|)`; the last two rows are zero.
pub fn companion_matrix(betas: &[f64], theta: f64, beta_x: f64, z_r: f64) -> DMatrix<f64> {
    let q = betas.len();
    let m = q + 2;
    let mut a = DMatrix::zeros(m, m);
    for (j, b) in betas.iter().enumerate() {
        a[(0, j)] = z_r * b;
    }
    a[(0, q)] = z_r * theta;
    a[(0, q + 1)] = z_r * beta_x;
    for j in 1..q {
        a[(j, j - 1)] = 1.0;
    }
    a
}

pub fn check_stationarity(betas: &[f64], theta: f64, beta_x: f64, z: ZMoment) -> StationarityReport {
    let z_r = z.value();
    // without return lags the exogenous terms feed nothing back
    let spectral_radius = if betas.iter().all(|b| *b == 0.0) {
        0.0
    } else {
        spectral_radius(&companion_matrix(betas, theta, beta_x, z_r))
    };
    StationarityReport {
        spectral_radius,
        stationary: spectral_radius < 1.0,
        z_r,
        r_moment: z.order(),
    }
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if let Some(schur) = Schur::try_new(a.clone(), 1e-15, 10_000) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|c: &Complex<f64>| c.norm())
            .fold(0.0, f64::max);
    }
    // Gelfand's formula by repeated squaring, tracking the scale in logs
    let mut m = a.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..40 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        m /= norm;
        log_scale += norm.ln() / k;
        m = &m * &m;
        k *= 2.0;
    }
    (log_scale + m.norm().ln() / k).exp()
}

/// Rescales a fitted model and runs [`check_stationarity`]; `None` (with a
/// warning) when some rescaled coefficient is negative.
pub fn check_model_stationarity(
    model: &MfqArchModel,
    innovation_quantile: f64,
    z: ZMoment,
) -> Result<Option<StationarityReport>> {
    let s = rescale_to_structural(&model.theta_star, innovation_quantile)?;
    if s.iter().any(|v| *v < 0.0) {
        log::warn!("negative rescaled coefficient; stationarity check skipped");
        return Ok(None);
    }
    let spec = &model.spec;
    let mut c = 1;
    let theta = if spec.use_midas {
        c += 1;
        s[1]
    } else {
        0.0
    };
    let betas = &s[c..c + spec.q];
    let beta_x = if spec.use_x { s[c + spec.q] } else { 0.0 };
    Ok(Some(check_stationarity(betas, theta, beta_x, z)))
}
