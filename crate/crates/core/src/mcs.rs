//! Model confidence set over VaR tracks under the asymmetric quantile loss,
//! with the semi-quadratic equal-predictive-ability statistic and a
//! circular block bootstrap.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backtest::VarTrack;
use crate::error::{Error, Result};

/// `(tau - 1(r < VaR)) (r - VaR)` per day.
pub fn quantile_loss_series(track: &VarTrack) -> Vec<f64> {
    track
        .records
        .iter()
        .map(|r| quantile_loss(r.ret, r.var, track.tau))
        .collect()
}

pub fn quantile_loss(ret: f64, var: f64, tau: f64) -> f64 {
    let ind = if ret < var { 1.0 } else { 0.0 };
    (tau - ind) * (ret - var)
}

/// Aligned losses, one column per model.
#[derive(Debug, Clone)]
pub struct LossPanel {
    pub models: Vec<String>,
    pub losses: Vec<Vec<f64>>,
    pub tau: f64,
}

impl LossPanel {
    pub fn new(models: Vec<String>, losses: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        if models.len() != losses.len() {
            return Err(Error::InvalidInput("one loss column per model required".into()));
        }
        if let Some(first) = losses.first() {
            if losses.iter().any(|l| l.len() != first.len()) {
                return Err(Error::Alignment("loss columns differ in length".into()));
            }
            if first.is_empty() {
                return Err(Error::InvalidInput("loss columns are empty".into()));
            }
        }
        if losses.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite loss".into()));
        }
        Ok(Self { models, losses, tau })
    }

    /// Builds the panel from tracks that must cover the same dates.
    pub fn from_tracks(named: &[(String, VarTrack)]) -> Result<Self> {
        let Some((_, first)) = named.first() else {
            return Err(Error::InvalidInput("no tracks".into()));
        };
        for (name, t) in named {
            if t.tau != first.tau {
                return Err(Error::Incompatible(format!("{name} has tau {}", t.tau)));
            }
            if t.len() != first.len()
                || t.records.iter().zip(&first.records).any(|(a, b)| a.date != b.date)
            {
                return Err(Error::Alignment(format!("{name} is not aligned with {}", named[0].0)));
            }
        }
        Self::new(
            named.iter().map(|(n, _)| n.clone()).collect(),
            named.iter().map(|(_, t)| quantile_loss_series(t)).collect(),
            first.tau,
        )
    }

    pub fn n_days(&self) -> usize {
        self.losses.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone)]
pub struct McsOptions {
    pub n_boot: usize,
    pub block_len: usize,
    pub seed: u64,
    /// Significance levels `delta`; the sets reported are `M*_{1 - delta}`.
    pub deltas: Vec<f64>,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            n_boot: 5000,
            block_len: 10,
            seed: 0,
            deltas: vec![0.25, 0.10],
        }
    }
}

#[derive(Debug, Clone)]
pub struct McsReport {
    pub models: Vec<String>,
    pub mean_loss: Vec<f64>,
    /// Model indices in elimination order with the p-value of the test that
    /// removed them; the last entry is the final survivor (p = 1).
    pub elimination_order: Vec<(usize, f64)>,
    /// MCS p-value per model (running maximum along the elimination order).
    pub mcs_p: Vec<f64>,
    /// `(confidence 1 - delta, surviving model indices)`.
    pub survivors: Vec<(f64, Vec<usize>)>,
}

impl McsReport {
    pub fn survivor_names(&self, confidence: f64) -> Option<Vec<&str>> {
        self.survivors
            .iter()
            .find(|(c, _)| (c - confidence).abs() < 1e-12)
            .map(|(_, s)| s.iter().map(|&i| self.models[i].as_str()).collect())
    }
}

/// Start indices of circular blocks covering `n` days.
fn block_starts(rng: &mut ChaCha8Rng, n: usize, block_len: usize) -> Vec<usize> {
    let n_blocks = n.div_ceil(block_len);
    (0..n_blocks).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap means per replicate and model.
fn bootstrap_means(panel: &LossPanel, opts: &McsOptions) -> Vec<Vec<f64>> {
    let n = panel.n_days();
    let m = panel.models.len();
    (0..opts.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let starts = block_starts(&mut rng, n, opts.block_len);
            let mut sums = vec![0.0; m];
            let mut count = 0;
            'outer: for s in starts {
                for k in 0..opts.block_len {
                    if count == n {
                        break 'outer;
                    }
                    let t = (s + k) % n;
                    for (j, col) in panel.losses.iter().enumerate() {
                        sums[j] += col[t];
                    }
                    count += 1;
                }
            }
            sums.iter().map(|s| s / n as f64).collect()
        })
        .collect()
}

struct Step {
    p_value: f64,
    eliminate: usize,
}

/// One equal-predictive-ability test on the models in `alive`.
fn test_step(alive: &[usize], mean: &[f64], boot: &[Vec<f64>], scale: f64) -> Step {
    let nb = boot.len() as f64;
    let zero_var = |d: f64, v: f64| v <= (1e-10 * (d.abs() + scale)).powi(2);

    // pairwise statistics over unordered pairs
    let mut t_obs = 0.0;
    let mut pairs = Vec::new();
    let mut dominated: Option<usize> = None;
    for (a, &i) in alive.iter().enumerate() {
        for &j in &alive[a + 1..] {
            let d = mean[i] - mean[j];
            let v = boot
                .iter()
                .map(|bm| (bm[i] - bm[j] - d).powi(2))
                .sum::<f64>()
                / nb;
            if zero_var(d, v) {
                if d.abs() > 1e-12 * scale {
                    let loser = if d > 0.0 { i } else { j };
                    if dominated.is_none_or(|k| mean[loser] > mean[k]) {
                        dominated = Some(loser);
                    }
                }
                continue;
            }
            t_obs += d * d / v;
            pairs.push((i, j, d, v));
        }
    }
    if let Some(k) = dominated {
        return Step {
            p_value: 0.0,
            eliminate: k,
        };
    }

    let p_value = if pairs.is_empty() {
        1.0
    } else {
        let exceed = boot
            .iter()
            .filter(|bm| {
                let t: f64 = pairs
                    .iter()
                    .map(|&(i, j, d, v)| (bm[i] - bm[j] - d).powi(2) / v)
                    .sum();
                t >= t_obs
            })
            .count();
        exceed as f64 / nb
    };

    // elimination by the largest standardized loss relative to the set average
    let m = alive.len() as f64;
    let avg = |v: &[f64]| alive.iter().map(|&k| v[k]).sum::<f64>() / m;
    let mean_avg = avg(mean);
    let boot_avg: Vec<f64> = boot.iter().map(|bm| avg(bm)).collect();
    let mut eliminate = alive[0];
    let mut best_t = f64::NEG_INFINITY;
    for &i in alive {
        let d = mean[i] - mean_avg;
        let v = boot
            .iter()
            .zip(&boot_avg)
            .map(|(bm, ba)| (bm[i] - ba - d).powi(2))
            .sum::<f64>()
            / nb;
        let t = if zero_var(d, v) { 0.0 } else { d / v.sqrt() };
        if t > best_t {
            best_t = t;
            eliminate = i;
        }
    }
    Step { p_value, eliminate }
}

pub fn run_mcs(panel: &LossPanel, opts: &McsOptions) -> Result<McsReport> {
    let m = panel.models.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("MCS needs at least two models, got {m}")));
    }
    if opts.n_boot < 1000 {
        return Err(Error::Config(format!("n_boot must be at least 1000, got {}", opts.n_boot)));
    }
    if opts.block_len == 0 {
        return Err(Error::Config("block length must be positive".into()));
    }
    if let Some(d) = opts.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::Config(format!("significance level {d} outside (0, 1)")));
    }
    let n = panel.n_days() as f64;
    let mean: Vec<f64> = panel.losses.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let scale = mean.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let boot = bootstrap_means(panel, opts);

    let mut alive: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    while alive.len() > 1 {
        let step = test_step(&alive, &mean, &boot, scale);
        order.push((step.eliminate, step.p_value));
        alive.retain(|&k| k != step.eliminate);
    }
    order.push((alive[0], 1.0));

    let mut mcs_p = vec![0.0; m];
    let mut running = 0.0f64;
    for &(k, p) in &order {
        running = running.max(p);
        mcs_p[k] = running;
    }
    let survivors = opts
        .deltas
        .iter()
        .map(|&d| {
            let set: Vec<usize> = (0..m).filter(|&k| mcs_p[k] >= d).collect();
            (1.0 - d, set)
        })
        .collect();
    Ok(McsReport {
        models: panel.models.clone(),
        mean_loss: mean,
        elimination_order: order,
        mcs_p,
        survivors,
    })
}

/// Text table: model, low-frequency variable, mean loss, MCS p-value and a
/// survivor marker per confidence level.
pub fn format_report(report: &McsReport, lf_var: &[String]) -> String {
    let mut out = String::new();
    out.push_str("# semi-quadratic statistic summed over unordered model pairs\n");
    out.push_str(&format!("{:<14} {:<10} {:>12} {:>8}", "model", "lf_var", "mean_loss", "mcs_p"));
    for (c, _) in &report.survivors {
        out.push_str(&format!(" {:>6}", format!("{:.0}%", c * 100.0)));
    }
    out.push('\n');
    for (k, name) in report.models.iter().enumerate() {
        let lf = lf_var.get(k).map(String::as_str).unwrap_or("");
        out.push_str(&format!(
            "{:<14} {:<10} {:>12.6} {:>8.3}",
            name, lf, report.mean_loss[k], report.mcs_p[k]
        ));
        for (_, set) in &report.survivors {
            out.push_str(&format!(" {:>6}", if set.contains(&k) { "*" } else { "" }));
        }
        out.push('\n');
    }
    out
}

/// CSV with columns `model, lf_var, mean_loss, mcs_p, in_<level>...`.
pub fn write_report_csv(path: &Path, report: &McsReport, lf_var: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string(), "lf_var".into(), "mean_loss".into(), "mcs_p".into()];
    header.extend(report.survivors.iter().map(|(c, _)| format!("in_{:.2}", c)));
    w.write_record(&header)?;
    for (k, name) in report.models.iter().enumerate() {
        let mut row = vec![
            name.clone(),
            lf_var.get(k).cloned().unwrap_or_default(),
            format!("{:.8}", report.mean_loss[k]),
            format!("{:.4}", report.mcs_p[k]),
        ];
        row.extend(
            report
                .survivors
                .iter()
                .map(|(_, s)| (s.contains(&k) as u8).to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
