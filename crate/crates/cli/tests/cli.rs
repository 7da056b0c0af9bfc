//! Runs the `mfqvar` binary against small simulated panels.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mfqvar");

const SMALL: &str = r#"
tau = 0.05
seed = 3
q = 2
k_lags = 12
window = 300
stride = 150
oos_start = "1975-01-01"
models = ["mfqarchx", "mfqarch", "sav", "riskmetrics"]

[paths]
daily = "data/sim_daily.csv"
monthly = "data/sim_monthly.csv"

[model.mfqarchx]
omega2_grid = { min = 1.001, max = 30.0, points = 12 }

[model.mfqarch]
omega2_grid = { min = 1.001, max = 30.0, points = 12 }

[model.sav]
n_starts = 200
n_refine = 2

[mcs]
n_boot = 1000

[simulate]
k_lags = 12
n_daily = 700
beta_x = 0.05
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mfqvar.toml"), config).unwrap();
    dir
}

/// Simulates into `data/` and moves the simulated calendar's start into the
/// config, so the out-of-sample date always sits 320 days in.
fn simulate(dir: &Path) -> String {
    let o = run(dir, &["simulate", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let daily = fs::read_to_string(dir.join("data/sim_daily.csv")).unwrap();
    let date = daily.lines().nth(1 + 320).unwrap().split(',').next().unwrap().to_string();
    let cfg = fs::read_to_string(dir.join("mfqvar.toml")).unwrap();
    let cfg = cfg.replace("1975-01-01", &date);
    fs::write(dir.join("mfqvar.toml"), &cfg).unwrap();
    date
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["lagtest"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_configs_exit_with_code_2() {
    for bad in [
        "tau = 1.5\n",
        "tau = 0.05\nq_max = 0\n",
        "tau = 0.05\nwindow = 100\n",
        "tau = 0.05\nno_such_key = 1\n",
        "tau = 0.05\nmodels = [\"nonsense\"]\n",
        "tau = 0.05\nq = \"sometimes\"\n",
        "tau = ",
    ] {
        let dir = setup(bad);
        let o = run(dir.path(), &["forecast"]);
        assert_eq!(code(&o), 2, "config {bad:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn backtest_without_forecasts_is_a_data_error() {
    let dir = setup(SMALL);
    let o = run(dir.path(), &["backtest"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("forecast"));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = setup(SMALL);
    let o = run(dir.path(), &["lagtest"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mcs_needs_two_models() {
    let dir = setup(&SMALL.replace(
        r#"models = ["mfqarchx", "mfqarch", "sav", "riskmetrics"]"#,
        r#"models = ["riskmetrics"]"#,
    ));
    simulate(dir.path());
    assert_eq!(code(&run(dir.path(), &["forecast"])), 0);
    let o = run(dir.path(), &["mcs"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let dir = setup(SMALL);
    let date = simulate(dir.path());
    for out in ["run_a", "run_b"] {
        for cmd in ["lagtest", "forecast", "backtest", "mcs"] {
            let o = run(dir.path(), &[cmd, "--out", out]);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let a = files(&dir.path().join("run_a"));
    let b = files(&dir.path().join("run_b"));
    assert_eq!(a, b);

    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    for want in [
        "backtest.csv",
        "backtest.txt",
        "forecast_mfqarch.csv",
        "forecast_mfqarchx.csv",
        "forecast_riskmetrics.csv",
        "forecast_sav.csv",
        "forecast_summary.txt",
        "lagtest.csv",
        "lagtest.txt",
        "mcs.csv",
        "mcs.txt",
    ] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }

    let track = fs::read_to_string(dir.path().join("run_a/forecast_mfqarchx.csv")).unwrap();
    assert!(track.contains("# config_sha256 = "));
    assert!(track.contains("# seed = 3"));
    let first_row = track.lines().find(|l| !l.starts_with('#') && !l.starts_with("date")).unwrap();
    assert!(first_row.starts_with(&date), "{first_row}");
    assert_eq!(track.lines().filter(|l| !l.starts_with('#')).count(), 1 + 700 - 320);

    let bt = fs::read_to_string(dir.path().join("run_a/backtest.csv")).unwrap();
    assert_eq!(bt.lines().next().unwrap(), "model,lf_var,mean_var,sd_var,ae,uc_p,cc_p,dq_p");
    assert_eq!(bt.lines().count(), 5);
    let mcs = fs::read_to_string(dir.path().join("run_a/mcs.csv")).unwrap();
    assert_eq!(mcs.lines().next().unwrap(), "model,lf_var,mean_loss,mcs_p,in_0.75,in_0.90");
}

#[test]
fn seed_flag_changes_the_simulation() {
    let dir = setup(SMALL);
    assert_eq!(code(&run(dir.path(), &["simulate", "--out", "a"])), 0);
    assert_eq!(code(&run(dir.path(), &["simulate", "--out", "b", "--seed", "4"])), 0);
    let a = fs::read(dir.path().join("a/sim_daily.csv")).unwrap();
    let b = fs::read(dir.path().join("b/sim_daily.csv")).unwrap();
    assert_ne!(a, b);
}
