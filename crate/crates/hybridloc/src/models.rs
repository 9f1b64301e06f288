//! Process and measurement models.
//!
//! The kinematic side is a discrete white-noise-acceleration (DWNA) model on
//! the state `(x, y, vx, vy)`: constant velocity between epochs, with the
//! acceleration entering as process noise. The measurement side provides the
//! log-distance path-loss model for received signal strength and the
//! range-difference model for UWB time differences of arrival, each with its
//! analytic Jacobian row with respect to the state.
//!
//! Everything in this module is a pure function over immutable values and is
//! safe to call concurrently.

use nalgebra::{Matrix4, Point2, RowVector4, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s. Converts propagation times to ranges.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are treated as coincident with an anchor, m.
///
/// The path-loss model is singular at zero distance and the TDOA Jacobian is
/// undefined there. Strict model entry points reject such geometries; the
/// filter-facing variants clamp instead so a track never dies mid-run.
pub const GEOMETRY_EPSILON: f64 = 1e-6;

const TEN_OVER_LN10: f64 = 10.0 / std::f64::consts::LN_10;

/// Radio technology of an anchor node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technology {
    /// Bluetooth Low Energy; measures received signal strength.
    Ble,
    /// Ultra-wideband; measures packet reception times.
    Uwb,
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technology::Ble => write!(f, "ble"),
            Technology::Uwb => write!(f, "uwb"),
        }
    }
}

/// Opaque anchor identifier, unique within a deployment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(String);

impl AnchorId {
    pub fn new(id: impl Into<String>) -> Self {
        AnchorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for AnchorId {
    fn from(s: &str) -> Self {
        AnchorId(s.to_owned())
    }
}

impl From<String> for AnchorId {
    fn from(s: String) -> Self {
        AnchorId(s)
    }
}

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A fixed infrastructure node at a known 2D position.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    /// Position in the deployment frame, meters.
    pub position: Point2<f64>,
    pub tech: Technology,
}

impl Anchor {
    pub fn new(id: impl Into<AnchorId>, x: f64, y: f64, tech: Technology) -> Self {
        Anchor {
            id: id.into(),
            position: Point2::new(x, y),
            tech,
        }
    }
}

/// A validated set of anchors: unique ids, finite positions.
///
/// Anchor order is preserved from construction; measurement assembly and the
/// simulator iterate anchors in this order, which keeps runs reproducible.
#[derive(Debug, Clone)]
pub struct Deployment {
    anchors: Vec<Anchor>,
    index: HashMap<AnchorId, usize>,
}

impl Deployment {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("deployment requires at least one anchor"));
        }
        let mut index = HashMap::with_capacity(anchors.len());
        for (i, a) in anchors.iter().enumerate() {
            if a.id.as_str().is_empty() {
                return Err(Error::invalid(format!("anchor {i} has an empty id")));
            }
            if a.id.as_str().contains(',') || a.id.as_str().chars().any(char::is_control) {
                return Err(Error::invalid(format!(
                    "anchor id `{}` contains characters not representable in the log format",
                    a.id
                )));
            }
            if !(a.position.x.is_finite() && a.position.y.is_finite()) {
                return Err(Error::invalid(format!(
                    "anchor `{}` has a non-finite position",
                    a.id
                )));
            }
            if index.insert(a.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate anchor id `{}`", a.id)));
            }
        }
        Ok(Deployment { anchors, index })
    }

    pub fn get(&self, id: &AnchorId) -> Option<&Anchor> {
        self.index.get(id).map(|&i| &self.anchors[i])
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn ble(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter().filter(|a| a.tech == Technology::Ble)
    }

    pub fn uwb(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter().filter(|a| a.tech == Technology::Uwb)
    }

    /// The TDOA reference anchor: first UWB anchor in id order.
    pub fn uwb_reference(&self) -> Option<&Anchor> {
        self.uwb().min_by(|a, b| a.id.cmp(&b.id))
    }

    /// Centroid of all anchor positions.
    pub fn centroid(&self) -> Point2<f64> {
        let n = self.anchors.len() as f64;
        let sum = self
            .anchors
            .iter()
            .fold(Vector2::zeros(), |acc, a| acc + a.position.coords);
        Point2::from(sum / n)
    }

    /// Axis-aligned bounding box of the anchor positions as (min, max).
    pub fn bounding_box(&self) -> (Point2<f64>, Point2<f64>) {
        let mut min = self.anchors[0].position;
        let mut max = min;
        for a in &self.anchors {
            min.x = min.x.min(a.position.x);
            min.y = min.y.min(a.position.y);
            max.x = max.x.max(a.position.x);
            max.y = max.y.max(a.position.y);
        }
        (min, max)
    }
}

/// Log-distance path-loss parameters: received power at the reference
/// distance, the reference distance itself and the path-loss exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    /// Received power at the reference distance, dBm.
    pub rss0_dbm: f64,
    /// Reference distance, m. Strictly positive.
    pub d0_m: f64,
    /// Path-loss exponent. Strictly positive; ~1.9 for indoor line of sight.
    pub gamma: f64,
}

impl PathLossParams {
    pub fn new(rss0_dbm: f64, d0_m: f64, gamma: f64) -> Result<Self> {
        if !rss0_dbm.is_finite() {
            return Err(Error::invalid("rss0 must be finite"));
        }
        if !(d0_m.is_finite() && d0_m > 0.0) {
            return Err(Error::invalid(format!("d0 must be > 0, got {d0_m}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(PathLossParams {
            rss0_dbm,
            d0_m,
            gamma,
        })
    }
}

/// DWNA process-noise intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwnaParams {
    /// Standard deviation of the white acceleration, m/s².
    pub sigma_a: f64,
}

impl DwnaParams {
    pub fn new(sigma_a: f64) -> Result<Self> {
        if !(sigma_a.is_finite() && sigma_a >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma_a must be >= 0, got {sigma_a}"
            )));
        }
        Ok(DwnaParams { sigma_a })
    }
}

impl Default for DwnaParams {
    /// 2 m/s² suits pedestrian maneuvering; tune per deployment.
    fn default() -> Self {
        DwnaParams { sigma_a: 2.0 }
    }
}

/// One time step of the DWNA model: transition matrix and process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    /// State transition matrix on `(x, y, vx, vy)`.
    pub f: Matrix4<f64>,
    /// Process-noise covariance; symmetric positive semi-definite.
    pub q: Matrix4<f64>,
    /// Step length, seconds.
    pub dt: f64,
}

impl StateTransition {
    pub fn new(dt: f64, params: &DwnaParams) -> Result<Self> {
        Ok(StateTransition {
            f: dwna_transition(dt)?,
            q: dwna_process_noise(dt, params)?,
            dt,
        })
    }
}

/// Constant-velocity transition matrix for a step of `dt` seconds.
///
/// Identity when `dt` is zero.
pub fn dwna_transition(dt: f64) -> Result<Matrix4<f64>> {
    check_dt(dt)?;
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    Ok(f)
}

/// DWNA process-noise covariance for a step of `dt` seconds.
///
/// Built per axis from the noise gain `[dt²/2, dt]ᵀ` scaled by `sigma_a²`,
/// with no coupling between the x and y axes. Zero when `dt` is zero.
pub fn dwna_process_noise(dt: f64, params: &DwnaParams) -> Result<Matrix4<f64>> {
    check_dt(dt)?;
    if !(params.sigma_a.is_finite() && params.sigma_a >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma_a must be >= 0, got {}",
            params.sigma_a
        )));
    }
    let var = params.sigma_a * params.sigma_a;
    let q_pp = var * dt.powi(4) / 4.0;
    let q_pv = var * dt.powi(3) / 2.0;
    let q_vv = var * dt.powi(2);
    let mut q = Matrix4::zeros();
    q[(0, 0)] = q_pp;
    q[(1, 1)] = q_pp;
    q[(2, 2)] = q_vv;
    q[(3, 3)] = q_vv;
    q[(0, 2)] = q_pv;
    q[(2, 0)] = q_pv;
    q[(1, 3)] = q_pv;
    q[(3, 1)] = q_pv;
    Ok(q)
}

fn check_dt(dt: f64) -> Result<()> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::invalid(format!(
            "time step must be finite and non-negative, got {dt}"
        )));
    }
    Ok(())
}

/// Predicted received signal strength at `pos` from `anchor`, dBm.
///
/// Log-distance model: `rss0 - 10·gamma·log10(d/d0)`. Rejects positions
/// within [`GEOMETRY_EPSILON`] of the anchor, where the model is singular.
pub fn rss_predict(pos: &Point2<f64>, anchor: &Anchor, pl: &PathLossParams) -> Result<f64> {
    let d = (pos - anchor.position).norm();
    if d < GEOMETRY_EPSILON {
        return Err(Error::degenerate(format!(
            "position coincides with anchor `{}` (distance {d:e} m)",
            anchor.id
        )));
    }
    Ok(rss_at_distance(d, pl))
}

fn rss_at_distance(d: f64, pl: &PathLossParams) -> f64 {
    pl.rss0_dbm - 10.0 * pl.gamma * (d / pl.d0_m).log10()
}

/// Filter-facing RSS prediction: clamps the distance at the geometry epsilon
/// instead of failing, so tracking survives a pass directly over an anchor.
pub(crate) fn rss_predict_clamped(pos: &Point2<f64>, anchor: &Anchor, pl: &PathLossParams) -> f64 {
    let d = (pos - anchor.position).norm().max(GEOMETRY_EPSILON);
    rss_at_distance(d, pl)
}

/// Row of the measurement Jacobian for one RSS reading, dB per meter on the
/// position entries and exactly zero on the velocity entries.
pub fn rss_jacobian_row(
    pos: &Point2<f64>,
    anchor: &Anchor,
    pl: &PathLossParams,
) -> Result<RowVector4<f64>> {
    let delta = pos - anchor.position;
    let d = delta.norm();
    if d < GEOMETRY_EPSILON {
        return Err(Error::degenerate(format!(
            "RSS Jacobian undefined at anchor `{}` (distance {d:e} m)",
            anchor.id
        )));
    }
    Ok(rss_jacobian_at(&delta, d, pl))
}

fn rss_jacobian_at(delta: &Vector2<f64>, d: f64, pl: &PathLossParams) -> RowVector4<f64> {
    let scale = -TEN_OVER_LN10 * pl.gamma / (d * d);
    RowVector4::new(scale * delta.x, scale * delta.y, 0.0, 0.0)
}

/// Clamped RSS Jacobian for the filter loop. At exact coincidence the
/// direction is undefined and the row degenerates to zero, which simply
/// removes that reading's positional pull for the epoch.
pub(crate) fn rss_jacobian_row_clamped(
    pos: &Point2<f64>,
    anchor: &Anchor,
    pl: &PathLossParams,
) -> RowVector4<f64> {
    let delta = pos - anchor.position;
    let d = delta.norm().max(GEOMETRY_EPSILON);
    rss_jacobian_at(&delta, d, pl)
}

/// Predicted range difference `‖pos - anchor_m‖ - ‖pos - anchor_ref‖`, m.
///
/// Divide by [`SPEED_OF_LIGHT`] for the time difference in seconds.
pub fn tdoa_predict(pos: &Point2<f64>, anchor_m: &Anchor, anchor_ref: &Anchor) -> Result<f64> {
    if anchor_m.id == anchor_ref.id {
        return Err(Error::invalid(format!(
            "TDOA requires two distinct anchors, got `{}` twice",
            anchor_m.id
        )));
    }
    Ok((pos - anchor_m.position).norm() - (pos - anchor_ref.position).norm())
}

/// Row of the measurement Jacobian for one TDOA reading: difference of unit
/// vectors toward the two anchors on the position entries, zero on velocity.
pub fn tdoa_jacobian_row(
    pos: &Point2<f64>,
    anchor_m: &Anchor,
    anchor_ref: &Anchor,
) -> Result<RowVector4<f64>> {
    if anchor_m.id == anchor_ref.id {
        return Err(Error::invalid(format!(
            "TDOA requires two distinct anchors, got `{}` twice",
            anchor_m.id
        )));
    }
    let dm = pos - anchor_m.position;
    let dr = pos - anchor_ref.position;
    let (nm, nr) = (dm.norm(), dr.norm());
    if nm < GEOMETRY_EPSILON || nr < GEOMETRY_EPSILON {
        let which = if nm < nr {
            &anchor_m.id
        } else {
            &anchor_ref.id
        };
        return Err(Error::degenerate(format!(
            "TDOA Jacobian undefined at anchor `{which}`"
        )));
    }
    Ok(tdoa_jacobian_at(&dm, nm, &dr, nr))
}

fn tdoa_jacobian_at(dm: &Vector2<f64>, nm: f64, dr: &Vector2<f64>, nr: f64) -> RowVector4<f64> {
    RowVector4::new(dm.x / nm - dr.x / nr, dm.y / nm - dr.y / nr, 0.0, 0.0)
}

/// Clamped TDOA Jacobian for the filter loop; norms are clamped at the
/// geometry epsilon so a position on top of an anchor yields a bounded row.
pub(crate) fn tdoa_jacobian_row_clamped(
    pos: &Point2<f64>,
    anchor_m: &Anchor,
    anchor_ref: &Anchor,
) -> RowVector4<f64> {
    let dm = pos - anchor_m.position;
    let dr = pos - anchor_ref.position;
    tdoa_jacobian_at(
        &dm,
        dm.norm().max(GEOMETRY_EPSILON),
        &dr,
        dr.norm().max(GEOMETRY_EPSILON),
    )
}
