//! Command-line driver: simulate scenarios, sweep TDOA rates, replay
//! measurement logs and evaluate tracks.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! runtime or numerical failures. Every failure prints a one-line
//! diagnostic to stderr.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hybridloc::sim::FilterMode;

mod commands;

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "hybridloc",
    version,
    about = "Hybrid BLE/UWB localization: EKF fusion, simulation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, filter it and evaluate the track.
    ///
    /// Writes truth.csv, measurements.csv, track.csv, errors.csv, cdf.csv
    /// and summary.csv into the output directory.
    Sim(SimArgs),
    /// Monte-Carlo sweep over TDOA rates against an RSS-only baseline.
    ///
    /// Writes one aggregated CDF per rate plus sweep_summary.csv.
    Sweep(SweepArgs),
    /// Replay a measurement log through the filter.
    Replay(ReplayArgs),
    /// Evaluate an existing track against a truth polyline.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Which measurements the filter consumes.
    #[arg(long, default_value = "hybrid", value_parser = parse_mode)]
    mode: FilterMode,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated TDOA rates to sweep, Hz.
    #[arg(long = "tdoa-rates", value_delimiter = ',', required = true)]
    tdoa_rates: Vec<f64>,
    /// Monte-Carlo runs per rate; run k uses seed + k.
    #[arg(long)]
    runs: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Measurement log CSV.
    #[arg(long)]
    log: PathBuf,
    /// Deployment description: a scenario configuration file whose anchors
    /// and model parameters are used (rates and noise levels are ignored).
    #[arg(long)]
    anchors: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Which measurements the filter consumes.
    #[arg(long, default_value = "hybrid", value_parser = parse_mode)]
    mode: FilterMode,
    /// Truth polyline (`x,y` waypoints or a truth.csv); enables error,
    /// CDF and summary outputs.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Track CSV to evaluate.
    #[arg(long)]
    track: PathBuf,
    /// Truth polyline (`x,y` waypoints or a truth.csv).
    #[arg(long)]
    truth: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<FilterMode, String> {
    s.parse().map_err(|e: hybridloc::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(args) => commands::sim(&args.config, args.seed, &args.out, args.mode),
        Command::Sweep(args) => {
            commands::sweep(&args.config, &args.tdoa_rates, args.runs, &args.out)
        }
        Command::Replay(args) => commands::replay(
            &args.log,
            &args.anchors,
            &args.out,
            args.mode,
            args.truth.as_deref(),
        ),
        Command::Eval(args) => commands::eval(&args.track, &args.truth, &args.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { source, code }) => {
            eprintln!("error: {source}");
            ExitCode::from(code)
        }
    }
}
