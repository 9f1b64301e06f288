//! Trajectory-error evaluation.
//!
//! The headline metric is the distance from each estimated position to the
//! nearest point of the true movement polyline (the geometric path, not the
//! time-aligned true position), so a lagging but on-path estimate scores
//! well. A time-aligned RMSE is also provided for completeness; it is a
//! different, stricter metric and is labeled as such in outputs.
//!
//! All functions are pure over immutable inputs.

use nalgebra::Point2;

use crate::ekf::Belief;
use crate::error::{Error, Result};

/// Per-estimate trajectory errors over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    /// `(t, error)` pairs, seconds and meters; errors are finite and >= 0.
    pub values: Vec<(f64, f64)>,
}

impl ErrorSeries {
    /// The error values without their timestamps.
    pub fn errors(&self) -> Vec<f64> {
        self.values.iter().map(|&(_, e)| e).collect()
    }
}

/// Step empirical CDF of a set of errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    /// `(error, fraction)` steps with strictly increasing errors and
    /// non-decreasing fractions ending at exactly 1.0.
    pub points: Vec<(f64, f64)>,
}

impl CdfCurve {
    /// Fraction of samples with error <= `x`.
    pub fn fraction_at(&self, x: f64) -> f64 {
        match self.points.partition_point(|&(e, _)| e <= x) {
            0 => 0.0,
            idx => self.points[idx - 1].1,
        }
    }
}

/// Summary statistics of an error sample, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    /// Lower-interpolation quantile at 0.5: on even counts this is the lower
    /// of the two central values, keeping tables reproducible.
    pub median: f64,
    pub mean: f64,
    /// Lower-interpolation quantile at 0.9.
    pub p90: f64,
    pub max: f64,
    pub count: usize,
}

/// Minimum Euclidean distance from `p` to a polyline, meters.
///
/// Per segment the projection parameter is clamped to the segment, so the
/// result is the distance to the nearest point of the path, endpoints
/// included.
pub fn point_to_polyline(p: &Point2<f64>, polyline: &[Point2<f64>]) -> Result<f64> {
    if polyline.len() < 2 {
        return Err(Error::invalid(format!(
            "polyline needs at least 2 points, got {}",
            polyline.len()
        )));
    }
    let mut best = f64::INFINITY;
    for seg in polyline.windows(2) {
        best = best.min(point_to_segment(p, &seg[0], &seg[1]));
    }
    Ok(best)
}

fn point_to_segment(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Trajectory error of every estimate in a track against the true polyline.
pub fn trajectory_error_series(track: &[Belief], polyline: &[Point2<f64>]) -> Result<ErrorSeries> {
    if track.is_empty() {
        return Err(Error::invalid("track is empty"));
    }
    let values = track
        .iter()
        .map(|b| point_to_polyline(&b.position(), polyline).map(|e| (b.timestamp, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorSeries { values })
}

/// Standard step ECDF: the fraction at the k-th sorted value is `k / N`.
/// Duplicate values collapse into one step at their highest fraction.
pub fn empirical_cdf(errors: &[f64]) -> Result<CdfCurve> {
    let sorted = checked_sorted(errors)?;
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, &e) in sorted.iter().enumerate() {
        let fraction = (k + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == e => last.1 = fraction,
            _ => points.push((e, fraction)),
        }
    }
    Ok(CdfCurve { points })
}

/// Summary statistics of an error sample.
pub fn summarize(errors: &[f64]) -> Result<Summary> {
    let sorted = checked_sorted(errors)?;
    let count = sorted.len();
    Ok(Summary {
        median: quantile_lower(&sorted, 0.5),
        mean: sorted.iter().sum::<f64>() / count as f64,
        p90: quantile_lower(&sorted, 0.9),
        max: *sorted.last().expect("non-empty"),
        count,
    })
}

fn checked_sorted(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::invalid("error sample is empty"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("error sample contains non-finite values"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    Ok(sorted)
}

/// Lower-interpolation quantile: the `ceil(q·n)`-th smallest value.
fn quantile_lower(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Root-mean-square distance between estimates and a time-aligned reference.
///
/// Pairs entries whose timestamps match within 1 ns; unmatched entries on
/// either side are ignored. Not the trajectory-error metric: this one
/// penalizes time lag along the path.
pub fn time_aligned_rmse(
    estimates: &[(f64, Point2<f64>)],
    reference: &[(f64, Point2<f64>)],
) -> Result<f64> {
    const TIME_EPS: f64 = 1e-9;
    let mut sum_sq = 0.0;
    let mut pairs = 0usize;
    let mut j = 0usize;
    for &(t, p) in estimates {
        while j < reference.len() && reference[j].0 < t - TIME_EPS {
            j += 1;
        }
        if j < reference.len() && (reference[j].0 - t).abs() <= TIME_EPS {
            sum_sq += (p - reference[j].1).norm_squared();
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::invalid(
            "no timestamp-aligned pairs between estimates and reference",
        ));
    }
    Ok((sum_sq / pairs as f64).sqrt())
}
