//! The five subcommands. Each reads what it needs from the configuration
//! and writes CSV plus a plain-text summary into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mfq_core::backtest::{backtest, format_report_text, read_track_csv, write_report_csv, write_track_csv, VarTrack};
use mfq_core::forecast::{rolling_forecast, ModelKind};
use mfq_core::mcs::{format_report, run_mcs, write_report_csv as write_mcs_csv, LossPanel};
use mfq_core::mfqarch::MfqSpec;
use mfq_core::qreg::sequential_lag_test;
use mfq_core::simulate::{
    run_mc_study, simulate_dgp, write_estimates_csv, write_lagtest_csv, DgpConfig, McStudyResult,
};
use mfq_core::timegrid::{
    build_panel_trimmed, read_daily_csv, read_monthly_csv, write_daily_csv, write_monthly_csv, MixedFreqPanel,
};
use mfq_core::{Error, Result};
use rayon::prelude::*;

use crate::config::RunConfig;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_panel(cfg: &RunConfig) -> Result<MixedFreqPanel> {
    let (Some(daily), Some(monthly)) = (&cfg.paths.daily, &cfg.paths.monthly) else {
        return Err(Error::Config("paths.daily and paths.monthly are required".into()));
    };
    let daily = read_daily_csv(&cfg.resolve(daily), cfg.return_unit)?;
    let monthly = read_monthly_csv(&cfg.resolve(monthly))?;
    let (panel, dropped) = build_panel_trimmed(daily, monthly, cfg.k_lags)?;
    if dropped > 0 {
        log::info!("dropped {dropped} leading days without {} months of history", cfg.k_lags);
    }
    Ok(panel)
}

fn track_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("forecast_{}.csv", kind.name()))
}

pub fn lagtest(cfg: &RunConfig) -> Result<String> {
    let panel = load_panel(cfg)?;
    let use_x = panel.has_x();
    let kind = if use_x { ModelKind::MfqArchX } else { ModelKind::MfqArch };
    let grid = cfg.rolling_settings(kind, panel.len() - 1)?.omega2_grid;
    let template = MfqSpec::new(0, cfg.k_lags, true, use_x, cfg.tau).with_grid(grid);
    let report = sequential_lag_test(&panel, &template, cfg.tau, cfg.q_max, cfg.alpha)?;

    let dir = out_dir(cfg)?;
    let mut w = csv::Writer::from_path(dir.join("lagtest.csv"))?;
    w.write_record(["null", "lr_stat", "p_value", "sparsity"])?;
    for (j, t) in report.tests.iter().enumerate() {
        w.write_record([
            format!("beta{}=0", j + 1),
            format!("{:.6}", t.statistic),
            format!("{:.6}", t.p_value),
            format!("{:.6}", t.sparsity),
        ])?;
    }
    w.flush()?;

    let mut text = format!(
        "{} sequential LR test, tau = {}, {} days\n\n{:<12}{:>12}{:>12}\n",
        kind.label(),
        cfg.tau,
        panel.len(),
        "null",
        "LR",
        "p-value"
    );
    for (j, t) in report.tests.iter().enumerate() {
        let _ = writeln!(text, "{:<12}{:>12.3}{:>12.3}", format!("beta{}=0", j + 1), t.statistic, t.p_value);
    }
    let _ = writeln!(text, "\nselected q = {}", report.selected_q);
    fs::write(dir.join("lagtest.txt"), &text)?;
    Ok(text)
}

pub fn forecast(cfg: &RunConfig) -> Result<String> {
    let panel = load_panel(cfg)?;
    let kinds = cfg.model_kinds()?;
    let oos_date = cfg
        .oos_start
        .ok_or_else(|| Error::Config("oos_start is required for forecasting".into()))?;
    let oos_start = panel
        .position_of(oos_date)
        .ok_or_else(|| Error::Config(format!("oos_start {oos_date} lies after the last observation")))?;
    if oos_start == 0 && panel.date(0) > oos_date {
        return Err(Error::Config(format!("oos_start {oos_date} precedes the data")));
    }
    let settings = kinds
        .iter()
        .map(|&k| cfg.rolling_settings(k, oos_start))
        .collect::<Result<Vec<_>>>()?;

    let dir = out_dir(cfg)?;
    let results: Vec<_> = kinds
        .par_iter()
        .zip(&settings)
        .map(|(&k, s)| rolling_forecast(&panel, k, s).map(|o| (k, o)))
        .collect();

    let mut text = format!(
        "Rolling forecasts: tau = {}, window = {}, stride = {}, out-of-sample from {} ({} days)\n\n",
        cfg.tau,
        cfg.window,
        cfg.stride,
        panel.date(oos_start),
        panel.len() - oos_start
    );
    let _ = writeln!(text, "{:<14}{:>8}{:>8}{:>6}{:>8}", "model", "refits", "failed", "q", "hits");
    for r in results {
        let (k, out) = r?;
        let comments = vec![
            format!("model = {}", k.name()),
            format!("config_sha256 = {}", cfg.hash),
            format!("seed = {}", cfg.seed),
            format!("window = {}", cfg.window),
            format!("stride = {}", cfg.stride),
            format!("refits = {}", out.refit_days.len()),
            format!("failed_refits = {}", out.failed_refits),
        ];
        write_track_csv(&track_path(&dir, k), &out.track, &comments)?;
        let _ = writeln!(
            text,
            "{:<14}{:>8}{:>8}{:>6}{:>8}",
            k.label(),
            out.refit_days.len(),
            out.failed_refits,
            out.q_used.map_or("-".into(), |q| q.to_string()),
            out.track.n_hits()
        );
    }
    fs::write(dir.join("forecast_summary.txt"), &text)?;
    Ok(text)
}

/// Reads the forecast tracks of the configured models, checking they cover
/// the same dates.
fn load_tracks(cfg: &RunConfig) -> Result<Vec<(ModelKind, VarTrack)>> {
    let dir = cfg.out_dir();
    let mut out: Vec<(ModelKind, VarTrack)> = Vec::new();
    for k in cfg.model_kinds()? {
        let path = track_path(&dir, k);
        if !path.exists() {
            return Err(Error::Data {
                path: path.display().to_string(),
                line: 0,
                msg: "forecast file not found; run `forecast` first".into(),
            });
        }
        let track = read_track_csv(&path)?;
        if track.is_empty() {
            return Err(Error::Data {
                path: path.display().to_string(),
                line: 0,
                msg: "forecast track is empty".into(),
            });
        }
        if let Some((k0, t0)) = out.first() {
            let dates = |t: &VarTrack| t.records.iter().map(|r| r.date).collect::<Vec<_>>();
            if dates(t0) != dates(&track) {
                return Err(Error::Alignment(format!(
                    "{} and {} cover different dates",
                    k0.name(),
                    k.name()
                )));
            }
        }
        out.push((k, track));
    }
    Ok(out)
}

pub fn backtest_cmd(cfg: &RunConfig) -> Result<String> {
    let tracks = load_tracks(cfg)?;
    let mut rows = Vec::with_capacity(tracks.len());
    let mut text = format!("Backtests at tau = {}\n\n", cfg.tau);
    for (k, t) in &tracks {
        let r = backtest(t, cfg.dq_lags)?;
        text.push_str(&format_report_text(k.label(), &r));
        text.push('\n');
        rows.push((k.label().to_string(), cfg.lf_var(*k), r));
    }
    let dir = out_dir(cfg)?;
    write_report_csv(&dir.join("backtest.csv"), &rows)?;
    fs::write(dir.join("backtest.txt"), &text)?;
    Ok(text)
}

pub fn mcs(cfg: &RunConfig) -> Result<String> {
    let tracks = load_tracks(cfg)?;
    if tracks.len() < 2 {
        return Err(Error::Config("the model confidence set needs at least two models".into()));
    }
    let named: Vec<(String, VarTrack)> = tracks.iter().map(|(k, t)| (k.label().to_string(), t.clone())).collect();
    let lf: Vec<String> = tracks.iter().map(|(k, _)| cfg.lf_var(*k)).collect();
    let report = run_mcs(&LossPanel::from_tracks(&named)?, &cfg.mcs_options())?;
    let dir = out_dir(cfg)?;
    write_mcs_csv(&dir.join("mcs.csv"), &report, &lf)?;
    let text = format_report(&report, &lf);
    fs::write(dir.join("mcs.txt"), &text)?;
    Ok(text)
}

pub fn simulate(cfg: &RunConfig) -> Result<String> {
    let dgp = cfg.dgp()?;
    let dir = out_dir(cfg)?;
    let panel = simulate_dgp(&dgp)?;
    write_daily_csv(&dir.join("sim_daily.csv"), panel.daily())?;
    write_monthly_csv(&dir.join("sim_monthly.csv"), panel.monthly())?;
    let mut text = format!(
        "Simulated {} days over {} months (seed {}) into {}\n",
        panel.len(),
        panel.monthly().len(),
        dgp.seed,
        dir.display()
    );

    let opts = cfg.study_options()?;
    if opts.r_reps == 0 {
        return Ok(text);
    }
    let mut by_tau: Vec<Vec<(usize, McStudyResult)>> = vec![Vec::new(); opts.tau_levels.len()];
    for &n in &cfg.simulate.sample_sizes {
        let d = DgpConfig {
            n_daily: n,
            ..dgp.clone()
        };
        for (i, res) in run_mc_study(&d, &opts)?.into_iter().enumerate() {
            by_tau[i].push((n, res));
        }
    }
    for (tau, rows) in opts.tau_levels.iter().zip(&by_tau) {
        write_estimates_csv(&dir.join(format!("mc_estimates_tau{tau}.csv")), rows)?;
        if opts.q_max > 0 {
            write_lagtest_csv(&dir.join(format!("mc_lagtest_tau{tau}.csv")), rows)?;
        }
        let _ = writeln!(text, "\ntau = {tau}, {} replicates", opts.r_reps);
        let _ = write!(text, "{:<8}{:>8}", "coef", "true");
        for (n, _) in rows {
            let _ = write!(text, "{:>10}{:>8}", format!("N={n}"), "MSE");
        }
        text.push('\n');
        for (j, label) in rows[0].1.labels.iter().enumerate() {
            let _ = write!(text, "{:<8}{:>8.3}", label, rows[0].1.truth[j]);
            for (_, r) in rows {
                let _ = write!(text, "{:>10.3}{:>8.3}", r.mean[j], r.mse[j]);
            }
            text.push('\n');
        }
        for (n, r) in rows {
            if r.failures > 0 {
                let _ = writeln!(text, "N={n}: {} replicates failed", r.failures);
            }
        }
    }
    fs::write(dir.join("simulate.txt"), &text)?;
    Ok(text)
}
