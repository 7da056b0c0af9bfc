//! CAViaR quantile recursions (symmetric absolute value, asymmetric slope,
//! indirect GARCH), fitted by minimizing the check loss of the implied path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{nelder_mead_restarts, PENALTY};
use crate::error::{Error, Result};
use crate::qreg::check_loss;
use crate::stats::{empirical_quantile, sorted, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaviarVariant {
    Sav,
    As,
    Ig,
}

impl CaviarVariant {
    pub fn n_params(self) -> usize {
        match self {
            CaviarVariant::As => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaviarOptions {
    pub n_starts: usize,
    pub n_refine: usize,
    pub init_window: usize,
    pub seed: u64,
}

impl Default for CaviarOptions {
    fn default() -> Self {
        Self {
            n_starts: 10_000,
            n_refine: 10,
            init_window: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaviarModel {
    pub variant: CaviarVariant,
    pub betas: Vec<f64>,
    pub tau: f64,
    /// Check loss over every day but the first, whose VaR is the fixed
    /// starting value.
    pub loss: f64,
    /// Starting value of the recursion.
    pub var0: f64,
}

/// One step of the recursion; `None` when the indirect-GARCH radicand is
/// not positive.
fn step(variant: CaviarVariant, b: &[f64], prev_var: f64, prev_ret: f64) -> Option<f64> {
    match variant {
        CaviarVariant::Sav => Some(b[0] + b[1] * prev_var + b[2] * prev_ret.abs()),
        CaviarVariant::As => {
            let slope = if prev_ret > 0.0 {
                b[2]
            } else if prev_ret < 0.0 {
                b[3]
            } else {
                0.0
            };
            Some(b[0] + b[1] * prev_var + slope * prev_ret.abs())
        }
        CaviarVariant::Ig => {
            let arg = b[0] + b[1] * prev_var * prev_var + b[2] * prev_ret * prev_ret;
            (arg > 0.0).then(|| -arg.sqrt())
        }
    }
}

/// VaR path over `returns`, length `returns.len() + 1`: entry `t` is the
/// forecast for day `t` and the last entry is the next-day forecast.
fn path(variant: CaviarVariant, b: &[f64], var0: f64, returns: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    out.push(var0);
    for (t, r) in returns.iter().enumerate() {
        let v = step(variant, b, out[t], *r)?;
        if !v.is_finite() {
            return None;
        }
        out.push(v);
    }
    Some(out)
}

fn objective(variant: CaviarVariant, b: &[f64], var0: f64, returns: &[f64], tau: f64) -> f64 {
    if variant == CaviarVariant::Ig && (b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0) {
        return PENALTY;
    }
    let mut prev = var0;
    let mut loss = 0.0;
    for t in 1..returns.len() {
        match step(variant, b, prev, returns[t - 1]) {
            Some(v) if v.is_finite() && v.abs() < 1e12 => {
                prev = v;
                loss += check_loss(returns[t] - v, tau);
            }
            _ => return PENALTY,
        }
    }
    loss
}

impl CaviarModel {
    /// VaR path over `returns` starting from the fitted initial value.
    pub fn var_path(&self, returns: &[f64]) -> Result<Vec<f64>> {
        path(self.variant, &self.betas, self.var0, returns)
            .ok_or_else(|| Error::Estimation("CAViaR recursion left its domain".into()))
    }

    /// VaR for the day after `returns`, filtering from the start of the slice.
    pub fn forecast(&self, returns: &[f64]) -> Result<f64> {
        Ok(*self.var_path(returns)?.last().unwrap())
    }
}

pub fn fit_caviar(returns: &[f64], tau: f64, variant: CaviarVariant) -> Result<CaviarModel> {
    fit_caviar_with(returns, tau, variant, &CaviarOptions::default())
}

/// Multi-start fit: `n_starts` uniform random parameter draws, the best
/// `n_refine` polished by Nelder-Mead.
pub fn fit_caviar_with(
    returns: &[f64],
    tau: f64,
    variant: CaviarVariant,
    opts: &CaviarOptions,
) -> Result<CaviarModel> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
    }
    let n = returns.len();
    if n < 300 {
        return Err(Error::InsufficientHistory(format!(
            "CAViaR needs at least 300 observations, got {n}"
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite return".into()));
    }
    let head = sorted(&returns[..opts.init_window.min(n).max(1)]);
    let var0 = empirical_quantile(&head, tau);
    let scale = variance(returns).sqrt().max(1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        match variant {
            CaviarVariant::Sav => vec![
                rng.random_range(-1.0..1.0) * scale,
                rng.random_range(0.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
            CaviarVariant::As => vec![
                rng.random_range(-1.0..1.0) * scale,
                rng.random_range(0.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
            CaviarVariant::Ig => vec![
                rng.random_range(0.0..1.0) * scale * scale,
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ],
        }
    };
    let f = |b: &[f64]| objective(variant, b, var0, returns, tau);

    let mut starts: Vec<(f64, Vec<f64>)> = Vec::with_capacity(opts.n_starts + 1);
    // the best constant recursion; the initial value itself is not scored,
    // so this start already matches the unconditional quantile fit
    let c = empirical_quantile(&sorted(&returns[1..]), tau);
    let constant = match variant {
        CaviarVariant::Ig => vec![c * c, 0.0, 0.0],
        CaviarVariant::As => vec![c, 0.0, 0.0, 0.0],
        CaviarVariant::Sav => vec![c, 0.0, 0.0],
    };
    starts.push((f(&constant), constant));
    for _ in 0..opts.n_starts {
        let b = draw(&mut rng);
        starts.push((f(&b), b));
    }
    starts.retain(|(v, _)| *v < PENALTY);
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if starts.is_empty() {
        return Err(Error::Estimation("every CAViaR start diverged".into()));
    }

    let step_sizes: Vec<f64> = match variant {
        CaviarVariant::Ig => vec![0.1 * scale * scale, 0.05, 0.05],
        _ => {
            let mut s = vec![0.1 * scale, 0.05, 0.05];
            if variant == CaviarVariant::As {
                s.push(0.05);
            }
            s
        }
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (_, b0) in starts.iter().take(opts.n_refine.max(1)) {
        let (b, v) = nelder_mead_restarts(&f, b0, &step_sizes, 3000, 3);
        if v < PENALTY && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((b, v));
        }
    }
    let (betas, loss) = best.ok_or_else(|| Error::Estimation("every CAViaR start diverged".into()))?;
    Ok(CaviarModel {
        variant,
        betas,
        tau,
        loss,
        var0,
    })
}
