//! File formats: scenario configuration, measurement logs and CSV outputs.
//!
//! All CSV values are written with a fixed 9-significant-digit decimal
//! format ([`format_value`]) so that repeated runs diff clean and writing
//! then reading reproduces values to the formatting precision. Readers are
//! strict: every malformed record is rejected with its line number, never
//! silently skipped.
//!
//! Stable schemas:
//!
//! - measurement log: `t,kind,anchor_id,ref_anchor_id,value,sigma`, sorted
//!   by `t`; `kind` is `RSS` (value dBm, sigma dB, empty `ref_anchor_id`)
//!   or `TDOA` (value and sigma in meters of range difference);
//! - track: `t,x,y,vx,vy,var_x,var_y`;
//! - CDF: `error_m,fraction`; summary: `metric,value`;
//! - scenario config: one TOML document, keys listed on
//!   [`load_scenario_config`]; unknown keys are rejected.

use nalgebra::Point2;
use serde::Deserialize;
use std::path::Path;

use crate::ekf::{Belief, MeasurementBatch, RssReading, TdoaReading};
use crate::error::{Error, Result};
use crate::metrics::{CdfCurve, ErrorSeries, Summary};
use crate::models::{Anchor, PathLossParams, Technology};
use crate::sim::{GroundTruth, ScenarioConfig};

const LOG_HEADER: &str = "t,kind,anchor_id,ref_anchor_id,value,sigma";
const TRACK_HEADER: &str = "t,x,y,vx,vy,var_x,var_y";
const TRUTH_HEADER: &str = "t,x,y,vx,vy";
const WAYPOINTS_HEADER: &str = "x,y";
const CDF_HEADER: &str = "error_m,fraction";
const SUMMARY_HEADER: &str = "metric,value";
const ERRORS_HEADER: &str = "t,error_m";

/// Formats a value with exactly 9 significant decimal digits.
///
/// The format is plain positional decimal (no exponent), which keeps the
/// files friendly to external plotting tools; formatting a parsed value
/// reproduces the text byte for byte.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0.000000000".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific notation");
    let exponent: i32 = exponent.parse().expect("valid exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    debug_assert_eq!(digits.len(), 9);

    let mut out = String::with_capacity(16);
    if negative {
        out.push('-');
    }
    if exponent >= 8 {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', (exponent - 8) as usize));
    } else if exponent >= 0 {
        let point = (exponent + 1) as usize;
        out.push_str(&digits[..point]);
        out.push('.');
        out.push_str(&digits[point..]);
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exponent - 1) as usize));
        out.push_str(&digits);
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnchor {
    id: String,
    x: f64,
    y: f64,
    tech: Technology,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    anchors: Option<Vec<RawAnchor>>,
    waypoints: Option<Vec<[f64; 2]>>,
    speed_mps: Option<f64>,
    rss_rate_hz: Option<f64>,
    tdoa_rate_hz: Option<f64>,
    shadow_sigma_db: Option<f64>,
    toa_sigma_ns: Option<f64>,
    rss0_dbm: Option<f64>,
    d0_m: Option<f64>,
    gamma: Option<f64>,
    sigma_a: Option<f64>,
    seed: Option<u64>,
    duration_s: Option<f64>,
}

/// Parses a scenario config from TOML text, filling unspecified keys with
/// the documented defaults (see [`ScenarioConfig::default`]).
///
/// Recognized keys: `anchors` (array of tables with `id`, `x`, `y`, `tech`),
/// `waypoints` (array of `[x, y]` pairs), `speed_mps`, `rss_rate_hz`,
/// `tdoa_rate_hz`, `shadow_sigma_db`, `toa_sigma_ns`, `rss0_dbm`, `d0_m`,
/// `gamma`, `sigma_a`, `seed`, `duration_s`. Unknown keys, type mismatches
/// and invariant violations are rejected with the offending key path.
pub fn load_scenario_config(text: &str) -> Result<ScenarioConfig> {
    let de =
        toml::de::Deserializer::parse(text).map_err(|e| toml_error(text, None, &e.to_string()))?;
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key.is_empty() || key == "." {
            "config".to_owned()
        } else {
            key
        };
        toml_error(text, Some(key), &e.inner().to_string())
    })?;

    let defaults = ScenarioConfig::default();
    let path_loss = PathLossParams::new(
        raw.rss0_dbm.unwrap_or(defaults.path_loss.rss0_dbm),
        raw.d0_m.unwrap_or(defaults.path_loss.d0_m),
        raw.gamma.unwrap_or(defaults.path_loss.gamma),
    )
    .map_err(|e| config_invariant(text, e))?;
    let dwna = crate::models::DwnaParams::new(raw.sigma_a.unwrap_or(defaults.dwna.sigma_a))
        .map_err(|e| config_invariant(text, e))?;

    let cfg = ScenarioConfig {
        anchors: match raw.anchors {
            Some(list) => list
                .into_iter()
                .map(|a| Anchor::new(a.id, a.x, a.y, a.tech))
                .collect(),
            None => defaults.anchors,
        },
        waypoints: match raw.waypoints {
            Some(list) => list.into_iter().map(|[x, y]| Point2::new(x, y)).collect(),
            None => defaults.waypoints,
        },
        speed_mps: raw.speed_mps.unwrap_or(defaults.speed_mps),
        rss_rate_hz: raw.rss_rate_hz.unwrap_or(defaults.rss_rate_hz),
        tdoa_rate_hz: raw.tdoa_rate_hz.unwrap_or(defaults.tdoa_rate_hz),
        shadow_sigma_db: raw.shadow_sigma_db.unwrap_or(defaults.shadow_sigma_db),
        toa_sigma_s: raw
            .toa_sigma_ns
            .map(|ns| ns * 1e-9)
            .unwrap_or(defaults.toa_sigma_s),
        path_loss,
        dwna,
        duration_s: raw.duration_s,
        seed: raw.seed.unwrap_or(defaults.seed),
    };
    cfg.validate().map_err(|e| config_invariant(text, e))?;
    Ok(cfg)
}

fn toml_error(text: &str, key: Option<String>, message: &str) -> Error {
    // The toml error Display spans several lines: "TOML parse error at line
    // N, column M", a source snippet, then the reason. Keep the reason and
    // the line number.
    let line = message
        .split("line ")
        .nth(1)
        .and_then(|rest| rest.split([',', ' ']).next())
        .and_then(|n| n.parse::<usize>().ok());
    let reason = message
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with(['|', '^']))
        .unwrap_or(message)
        .to_owned();
    let key = key.unwrap_or_else(|| "config".to_owned());
    let line = line.or_else(|| find_key_line(text, &key));
    Error::Config {
        key,
        line,
        message: reason,
    }
}

/// Maps a semantic validation failure onto the config key it names.
fn config_invariant(text: &str, err: Error) -> Error {
    let message = err.to_string();
    let detail = message
        .strip_prefix("invalid argument: ")
        .unwrap_or(&message)
        .to_owned();
    let known_keys = [
        "speed_mps",
        "rss_rate_hz",
        "tdoa_rate_hz",
        "shadow_sigma_db",
        "toa_sigma_ns",
        "rss0",
        "d0",
        "gamma",
        "sigma_a",
        "duration_s",
        "waypoint",
        "anchor",
    ];
    let key = known_keys
        .iter()
        .find(|k| detail.contains(*k))
        .map(|k| match *k {
            "rss0" => "rss0_dbm",
            "d0" => "d0_m",
            "waypoint" => "waypoints",
            "anchor" => "anchors",
            other => other,
        })
        .unwrap_or("config")
        .to_owned();
    Error::Config {
        line: find_key_line(text, &key),
        key,
        message: detail,
    }
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let bare = key.split(['.', '[']).next().unwrap_or(key);
    text.lines()
        .position(|line| {
            let trimmed = line.trim_start();
            trimmed.starts_with(bare) && trimmed[bare.len()..].trim_start().starts_with(['=', '.'])
        })
        .map(|idx| idx + 1)
}

// ---------------------------------------------------------------------------
// Measurement log
// ---------------------------------------------------------------------------

/// Serializes a measurement feed to log CSV, one row per reading.
pub fn write_measurement_log(feed: &[MeasurementBatch]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for batch in feed {
        let t = format_value(batch.timestamp);
        for r in &batch.rss {
            out.push_str(&format!(
                "{t},RSS,{},,{},{}\n",
                r.anchor_id,
                format_value(r.value_dbm),
                format_value(r.sigma_db)
            ));
        }
        for r in &batch.tdoa {
            out.push_str(&format!(
                "{t},TDOA,{},{},{},{}\n",
                r.anchor_id,
                r.ref_anchor_id,
                format_value(r.value_m),
                format_value(r.sigma_m)
            ));
        }
    }
    out
}

/// Parses a measurement log, grouping rows with identical timestamps into
/// one batch. Rows must be sorted by `t`.
pub fn read_measurement_log(text: &str) -> Result<Vec<MeasurementBatch>> {
    let mut lines = numbered_lines(text);
    expect_header(&mut lines, LOG_HEADER)?;

    let mut feed: Vec<MeasurementBatch> = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                line_no,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        let t = parse_f64(fields[0], line_no, "t")?;
        match feed.last() {
            Some(prev) if t < prev.timestamp => {
                return Err(parse_err(
                    line_no,
                    format!(
                        "timestamps must be non-decreasing: {} after {}",
                        fields[0],
                        format_value(prev.timestamp)
                    ),
                ));
            }
            Some(prev) if t == prev.timestamp => {}
            _ => feed.push(MeasurementBatch::new(t)),
        }
        let batch = feed.last_mut().expect("batch exists");

        let value = parse_f64(fields[4], line_no, "value")?;
        let sigma = parse_f64(fields[5], line_no, "sigma")?;
        match fields[1] {
            "RSS" => {
                if !fields[3].is_empty() {
                    return Err(parse_err(
                        line_no,
                        "RSS rows must leave ref_anchor_id empty".to_owned(),
                    ));
                }
                let reading = RssReading::new(fields[2], value, sigma)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                batch.rss.push(reading);
            }
            "TDOA" => {
                if fields[3].is_empty() {
                    return Err(parse_err(
                        line_no,
                        "TDOA rows require a ref_anchor_id".to_owned(),
                    ));
                }
                let reading = TdoaReading::new(fields[2], fields[3], value, sigma)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                batch.tdoa.push(reading);
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unknown measurement kind `{other}` (expected RSS or TDOA)"),
                ));
            }
        }
    }
    Ok(feed)
}

// ---------------------------------------------------------------------------
// Track CSV
// ---------------------------------------------------------------------------

/// One row of a track file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub var_x: f64,
    pub var_y: f64,
}

impl TrackRow {
    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

impl From<&Belief> for TrackRow {
    fn from(b: &Belief) -> Self {
        TrackRow {
            t: b.timestamp,
            x: b.state[0],
            y: b.state[1],
            vx: b.state[2],
            vy: b.state[3],
            var_x: b.cov[(0, 0)],
            var_y: b.cov[(1, 1)],
        }
    }
}

/// Serializes a track (state estimates plus position variances) to CSV.
pub fn write_track(track: &[Belief]) -> Result<String> {
    if track.is_empty() {
        return Err(Error::invalid("cannot write an empty track"));
    }
    Ok(write_track_rows(track.iter().map(TrackRow::from)))
}

/// Serializes already-materialized track rows; [`read_track`] followed by
/// this function reproduces a written file byte for byte.
pub fn write_track_rows(rows: impl IntoIterator<Item = TrackRow>) -> String {
    let mut out = String::from(TRACK_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            format_value(r.t),
            format_value(r.x),
            format_value(r.y),
            format_value(r.vx),
            format_value(r.vy),
            format_value(r.var_x),
            format_value(r.var_y)
        ));
    }
    out
}

/// Parses a track CSV.
pub fn read_track(text: &str) -> Result<Vec<TrackRow>> {
    let mut lines = numbered_lines(text);
    expect_header(&mut lines, TRACK_HEADER)?;
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                line_no,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        rows.push(TrackRow {
            t: parse_f64(fields[0], line_no, "t")?,
            x: parse_f64(fields[1], line_no, "x")?,
            y: parse_f64(fields[2], line_no, "y")?,
            vx: parse_f64(fields[3], line_no, "vx")?,
            vy: parse_f64(fields[4], line_no, "vy")?,
            var_x: parse_f64(fields[5], line_no, "var_x")?,
            var_y: parse_f64(fields[6], line_no, "var_y")?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Evaluation outputs and truth
// ---------------------------------------------------------------------------

/// Serializes a CDF curve to CSV.
pub fn write_cdf(curve: &CdfCurve) -> Result<String> {
    if curve.points.is_empty() {
        return Err(Error::invalid("cannot write an empty CDF"));
    }
    let mut out = String::from(CDF_HEADER);
    out.push('\n');
    for &(e, f) in &curve.points {
        out.push_str(&format!("{},{}\n", format_value(e), format_value(f)));
    }
    Ok(out)
}

/// Serializes summary statistics to `metric,value` CSV. `extra` rows (for
/// example a time-aligned RMSE) are appended after the standard metrics.
pub fn write_summary(summary: &Summary, extra: &[(&str, f64)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    out.push_str(&format!("median_m,{}\n", format_value(summary.median)));
    out.push_str(&format!("mean_m,{}\n", format_value(summary.mean)));
    out.push_str(&format!("p90_m,{}\n", format_value(summary.p90)));
    out.push_str(&format!("max_m,{}\n", format_value(summary.max)));
    out.push_str(&format!("count,{}\n", summary.count));
    for (name, value) in extra {
        out.push_str(&format!("{name},{}\n", format_value(*value)));
    }
    out
}

/// Serializes an error series to `t,error_m` CSV.
pub fn write_error_series(series: &ErrorSeries) -> Result<String> {
    if series.values.is_empty() {
        return Err(Error::invalid("cannot write an empty error series"));
    }
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for &(t, e) in &series.values {
        out.push_str(&format!("{},{}\n", format_value(t), format_value(e)));
    }
    Ok(out)
}

/// Serializes ground-truth samples to `t,x,y,vx,vy` CSV.
pub fn write_truth(truth: &GroundTruth) -> Result<String> {
    if truth.samples.is_empty() {
        return Err(Error::invalid("cannot write empty ground truth"));
    }
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for s in &truth.samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_value(s.t),
            format_value(s.position.x),
            format_value(s.position.y),
            format_value(s.velocity.x),
            format_value(s.velocity.y)
        ));
    }
    Ok(out)
}

/// Parses a truth polyline for evaluation.
///
/// Accepts either a bare waypoint file (header `x,y`) or a truth-sample file
/// as written by [`write_truth`] (header `t,x,y,vx,vy`), whose sample
/// positions are used as the polyline vertices.
pub fn read_polyline(text: &str) -> Result<Vec<Point2<f64>>> {
    let mut lines = numbered_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".to_owned()))?;
    let (x_at, expected_fields) = match header {
        WAYPOINTS_HEADER => (0usize, 2usize),
        TRUTH_HEADER => (1usize, 5usize),
        other => {
            return Err(parse_err(
                1,
                format!("expected header `{WAYPOINTS_HEADER}` or `{TRUTH_HEADER}`, got `{other}`"),
            ));
        }
    };
    let mut points = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(parse_err(
                line_no,
                format!("expected {expected_fields} fields, got {}", fields.len()),
            ));
        }
        points.push(Point2::new(
            parse_f64(fields[x_at], line_no, "x")?,
            parse_f64(fields[x_at + 1], line_no, "y")?,
        ));
    }
    Ok(points)
}

/// Serializes waypoints to `x,y` CSV.
pub fn write_waypoints(waypoints: &[Point2<f64>]) -> Result<String> {
    if waypoints.is_empty() {
        return Err(Error::invalid("cannot write empty waypoints"));
    }
    let mut out = String::from(WAYPOINTS_HEADER);
    out.push('\n');
    for w in waypoints {
        out.push_str(&format!("{},{}\n", format_value(w.x), format_value(w.y)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

/// Reads a file to a string, surfacing the path on failure.
pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a file, surfacing the path on failure.
pub fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Parsing utilities
// ---------------------------------------------------------------------------

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    expected: &str,
) -> Result<()> {
    match lines.next() {
        Some((_, header)) if header == expected => Ok(()),
        Some((line, header)) => Err(parse_err(
            line,
            format!("expected header `{expected}`, got `{header}`"),
        )),
        None => Err(parse_err(
            1,
            format!("empty file, expected header `{expected}`"),
        )),
    }
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(
            line,
            format!("field `{name}`: `{field}` is not a finite number"),
        )),
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}
