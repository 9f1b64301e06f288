//! Subcommand implementations.
//!
//! The simulate path deliberately round-trips its own files: the filter runs
//! on the measurement log as re-parsed from disk, and evaluation runs on the
//! track as re-parsed from disk. The written CSVs are the contract, so a
//! later `replay` or `eval` over those files reproduces the `sim` outputs
//! byte for byte.

use std::path::Path;

use hybridloc::error::Error;
use hybridloc::io;
use hybridloc::metrics::{
    empirical_cdf, point_to_polyline, summarize, time_aligned_rmse, ErrorSeries,
};
use hybridloc::sim::{filter_feed, run_scenario, FilterMode, ScenarioConfig};
use hybridloc::{Point2, Track};

/// Failure plus the process exit code it maps to.
pub struct CliError {
    pub source: Error,
    pub code: u8,
}

/// Classifies an error from the processing phase: bad inputs exit 1,
/// numerical/runtime trouble exits 2.
fn classify(source: Error) -> CliError {
    let code = match &source {
        Error::InvalidArgument(_)
        | Error::Config { .. }
        | Error::Parse { .. }
        | Error::UnknownAnchor(_)
        | Error::OutOfOrder { .. }
        | Error::Io { .. } => 1,
        Error::Numerical { .. } | Error::InvalidState(_) | Error::DegenerateGeometry(_) => 2,
    };
    CliError { source, code }
}

/// Wraps an output-side failure; anything that breaks while producing
/// results is a runtime error.
fn runtime(source: Error) -> CliError {
    CliError { source, code: 2 }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    io::read_file(path).map_err(classify)
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    io::write_file(&dir.join(name), content).map_err(runtime)
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        runtime(Error::Io {
            path: dir.display().to_string(),
            source,
        })
    })
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let cfg = io::load_scenario_config(&read_input(path)?).map_err(classify)?;
    for warning in cfg.validate().map_err(classify)? {
        eprintln!("warning: {warning}");
    }
    Ok(cfg)
}

/// Distance of every track row to the truth polyline.
fn track_errors(rows: &[io::TrackRow], polyline: &[Point2<f64>]) -> Result<ErrorSeries, CliError> {
    let values = rows
        .iter()
        .map(|r| point_to_polyline(&r.position(), polyline).map(|e| (r.t, e)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    if values.is_empty() {
        return Err(classify(Error::InvalidArgument("track is empty".into())));
    }
    Ok(ErrorSeries { values })
}

fn write_evaluation(
    out: &Path,
    series: &ErrorSeries,
    extra_summary: &[(&str, f64)],
) -> Result<(), CliError> {
    let errors = series.errors();
    let cdf = empirical_cdf(&errors).map_err(runtime)?;
    let summary = summarize(&errors).map_err(runtime)?;
    write_output(
        out,
        "errors.csv",
        &io::write_error_series(series).map_err(runtime)?,
    )?;
    write_output(out, "cdf.csv", &io::write_cdf(&cdf).map_err(runtime)?)?;
    write_output(
        out,
        "summary.csv",
        &io::write_summary(&summary, extra_summary),
    )?;
    Ok(())
}

pub fn sim(config: &Path, seed: Option<u64>, out: &Path, mode: FilterMode) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    prepare_out_dir(out)?;

    let scenario = run_scenario(&cfg).map_err(classify)?;
    write_output(
        out,
        "truth.csv",
        &io::write_truth(&scenario.truth).map_err(runtime)?,
    )?;

    // The filter consumes the log as written: parse it back so replaying
    // measurements.csv reproduces track.csv exactly.
    let log_text = io::write_measurement_log(&scenario.feed);
    write_output(out, "measurements.csv", &log_text)?;
    let feed = io::read_measurement_log(&log_text).map_err(runtime)?;

    let track: Track = filter_feed(&cfg, &feed, mode).map_err(classify)?;
    let track_text = io::write_track(&track).map_err(runtime)?;
    write_output(out, "track.csv", &track_text)?;

    let rows = io::read_track(&track_text).map_err(runtime)?;
    let series = track_errors(&rows, &cfg.waypoints)?;

    let truth_points: Vec<(f64, Point2<f64>)> = scenario
        .truth
        .samples
        .iter()
        .map(|s| (s.t, s.position))
        .collect();
    let estimates: Vec<(f64, Point2<f64>)> = rows.iter().map(|r| (r.t, r.position())).collect();
    // Time-aligned RMSE is a stricter companion metric; the headline
    // trajectory error is distance to the path.
    let rmse = time_aligned_rmse(&estimates, &truth_points).map_err(runtime)?;

    write_evaluation(out, &series, &[("rmse_time_aligned_m", rmse)])
}

pub fn sweep(config: &Path, tdoa_rates: &[f64], runs: u64, out: &Path) -> Result<(), CliError> {
    let base = load_config(config)?;
    if runs == 0 {
        return Err(classify(Error::InvalidArgument(
            "sweep requires at least 1 run per rate".into(),
        )));
    }
    if tdoa_rates.is_empty() {
        return Err(classify(Error::InvalidArgument(
            "sweep requires at least one TDOA rate".into(),
        )));
    }
    for &rate in tdoa_rates {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(classify(Error::InvalidArgument(format!(
                "TDOA rates must be > 0, got {rate}"
            ))));
        }
    }
    prepare_out_dir(out)?;

    let mut rates: Vec<f64> = tdoa_rates.to_vec();
    rates.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    rates.dedup();

    // RSS-only baseline over the same seeds.
    let mut baseline_medians = Vec::with_capacity(runs as usize);
    let mut baseline_p90s = Vec::with_capacity(runs as usize);
    for run in 0..runs {
        let cfg = ScenarioConfig {
            seed: base.seed + run,
            ..base.clone()
        };
        let scenario = run_scenario(&cfg).map_err(classify)?;
        let track = filter_feed(&cfg, &scenario.feed, FilterMode::RssOnly).map_err(classify)?;
        let summary = summarize(&track_series(&track, &cfg)?.errors()).map_err(runtime)?;
        baseline_medians.push(summary.median);
        baseline_p90s.push(summary.p90);
    }

    let mut summary_csv = String::from("rate_hz,median_m,p90_m\n");
    summary_csv.push_str(&format!(
        "rss_only,{},{}\n",
        io::format_value(mean(&baseline_medians)),
        io::format_value(mean(&baseline_p90s))
    ));

    for &rate in &rates {
        let mut medians = Vec::with_capacity(runs as usize);
        let mut p90s = Vec::with_capacity(runs as usize);
        let mut pooled: Vec<f64> = Vec::new();
        for run in 0..runs {
            let cfg = ScenarioConfig {
                tdoa_rate_hz: rate,
                seed: base.seed + run,
                ..base.clone()
            };
            let scenario = run_scenario(&cfg).map_err(classify)?;
            let series = track_series(&scenario.track, &cfg)?;
            let errors = series.errors();
            let summary = summarize(&errors).map_err(runtime)?;
            medians.push(summary.median);
            p90s.push(summary.p90);
            pooled.extend(errors);
        }
        let cdf = empirical_cdf(&pooled).map_err(runtime)?;
        write_output(
            out,
            &format!("cdf_tdoa_{rate}hz.csv"),
            &io::write_cdf(&cdf).map_err(runtime)?,
        )?;
        summary_csv.push_str(&format!(
            "{rate},{},{}\n",
            io::format_value(mean(&medians)),
            io::format_value(mean(&p90s))
        ));
    }
    write_output(out, "sweep_summary.csv", &summary_csv)
}

fn track_series(track: &Track, cfg: &ScenarioConfig) -> Result<ErrorSeries, CliError> {
    hybridloc::metrics::trajectory_error_series(track, &cfg.waypoints).map_err(runtime)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn replay(
    log: &Path,
    anchors: &Path,
    out: &Path,
    mode: FilterMode,
    truth: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = load_config(anchors)?;
    let feed = io::read_measurement_log(&read_input(log)?).map_err(classify)?;
    prepare_out_dir(out)?;

    let track = filter_feed(&cfg, &feed, mode).map_err(classify)?;
    let track_text = io::write_track(&track).map_err(runtime)?;
    write_output(out, "track.csv", &track_text)?;

    if let Some(truth_path) = truth {
        let polyline = io::read_polyline(&read_input(truth_path)?).map_err(classify)?;
        let rows = io::read_track(&track_text).map_err(runtime)?;
        let series = track_errors(&rows, &polyline)?;
        write_evaluation(out, &series, &[])?;
    }
    Ok(())
}

pub fn eval(track: &Path, truth: &Path, out: &Path) -> Result<(), CliError> {
    let rows = io::read_track(&read_input(track)?).map_err(classify)?;
    if rows.is_empty() {
        return Err(classify(Error::InvalidArgument(format!(
            "track `{}` contains no rows",
            track.display()
        ))));
    }
    let polyline = io::read_polyline(&read_input(truth)?).map_err(classify)?;
    prepare_out_dir(out)?;
    let series = track_errors(&rows, &polyline)?;
    write_evaluation(out, &series, &[])
}
