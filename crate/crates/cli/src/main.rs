//! `mfqvar`: batch front end for lag selection, rolling VaR forecasts,
//! backtests, model confidence sets and Monte Carlo studies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfq_core::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "mfqvar", version, about = "Mixed-frequency quantile VaR toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value = "mfqvar.toml")]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sequential LR test for the number of daily lags.
    Lagtest,
    /// Rolling out-of-sample VaR forecasts for every configured model.
    Forecast,
    /// Coverage backtests of the forecast files.
    Backtest,
    /// Model confidence set over the forecast files.
    Mcs,
    /// Simulated panel and, optionally, a Monte Carlo study.
    Simulate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Alignment(_)
        | Error::Coverage(_)
        | Error::InvalidInput(_)
        | Error::InsufficientHistory(_) => 3,
        Error::Estimation(_)
        | Error::SingularDesign(_)
        | Error::ZeroSparsity
        | Error::ZeroQuantile
        | Error::Incompatible(_) => 4,
    }
}

fn run(cli: &Cli) -> mfq_core::Result<String> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        // relative to the working directory, not the config file
        cfg.paths.out = std::path::absolute(out)?;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Lagtest => commands::lagtest(&cfg),
        Command::Forecast => commands::forecast(&cfg),
        Command::Backtest => commands::backtest_cmd(&cfg),
        Command::Mcs => commands::mcs(&cfg),
        Command::Simulate => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
