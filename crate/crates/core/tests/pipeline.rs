//! Simulate, forecast, backtest and rank, end to end through the library.

use mfq_core::backtest::{backtest, read_track_csv, write_track_csv};
use mfq_core::competitors::CaviarOptions;
use mfq_core::forecast::{rolling_forecasts, LagChoice, ModelKind, RollingSettings};
use mfq_core::mcs::{run_mcs, LossPanel, McsOptions};
use mfq_core::mfqarch::log_grid;
use mfq_core::simulate::{simulate_dgp, DgpConfig};

fn run(seed: u64) -> (Vec<Vec<u64>>, Vec<(f64, Vec<usize>)>, Vec<u64>) {
    let panel = simulate_dgp(&DgpConfig {
        n_daily: 1000,
        k_lags: 12,
        beta_x: 0.05,
        seed,
        ..DgpConfig::default()
    })
    .unwrap();
    let settings = RollingSettings {
        q: LagChoice::Auto { q_max: 5 },
        k_lags: 12,
        window: 600,
        stride: 100,
        omega2_grid: log_grid(1.001, 30.0, 20),
        caviar: CaviarOptions {
            n_starts: 300,
            n_refine: 3,
            seed,
            ..CaviarOptions::default()
        },
        ..RollingSettings::new(0.05, 620)
    };
    let kinds = [ModelKind::MfqArchX, ModelKind::Sav, ModelKind::GjrT, ModelKind::RiskMetrics];
    let outs = rolling_forecasts(&panel, &kinds, &settings);

    let mut named = Vec::new();
    let mut bits = Vec::new();
    for (kind, out) in outs {
        let out = out.unwrap();
        assert_eq!(out.track.len(), 380);
        assert_eq!(out.refit_days, vec![620, 720, 820, 920]);
        assert_eq!(out.failed_refits, 0);
        assert_eq!(out.q_used.is_some(), kind == ModelKind::MfqArchX);
        let report = backtest(&out.track, 4).unwrap();
        assert!(report.ae > 0.2 && report.ae < 3.0, "{kind}: {report:?}");
        bits.push(out.track.vars().iter().map(|v| v.to_bits()).collect());
        named.push((kind.label().to_string(), out.track));
    }
    let rep = run_mcs(
        &LossPanel::from_tracks(&named).unwrap(),
        &McsOptions {
            n_boot: 1000,
            seed,
            ..McsOptions::default()
        },
    )
    .unwrap();
    // the final survivor always carries p = 1
    assert_eq!(rep.mcs_p.iter().cloned().fold(0.0, f64::max), 1.0);
    let p = rep.mcs_p.iter().map(|v| v.to_bits()).collect();
    (bits, rep.survivors, p)
}

#[test]
fn pipeline_is_deterministic() {
    let a = run(5);
    let b = run(5);
    assert_eq!(a, b);
}

#[test]
fn track_files_round_trip() {
    let panel = simulate_dgp(&DgpConfig {
        n_daily: 700,
        k_lags: 12,
        ..DgpConfig::default()
    })
    .unwrap();
    let s = RollingSettings {
        k_lags: 12,
        window: 400,
        stride: 50,
        ..RollingSettings::new(0.01, 410)
    };
    let out = mfq_core::forecast::rolling_forecast(&panel, ModelKind::Garch, &s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garch.csv");
    write_track_csv(&path, &out.track, &["model = garch".into()]).unwrap();
    let back = read_track_csv(&path).unwrap();
    assert_eq!(back.tau, 0.01);
    assert_eq!(back.len(), out.track.len());
    for (a, b) in back.records.iter().zip(&out.track.records) {
        assert_eq!(a.date, b.date);
        assert_eq!(a.hit, b.hit);
        assert!((a.var - b.var).abs() <= 1e-12 * b.var.abs().max(1.0));
    }
}
