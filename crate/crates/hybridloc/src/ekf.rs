//! Hybrid Extended Kalman Filter over RSS and TDOA measurements.
//!
//! The filter alternates a DWNA time update with a joint measurement update.
//! Because the two radios report at different rates, the measurement vector
//! has a variable dimension: each epoch stacks whatever RSS readings and
//! TDOA readings arrived together, and the Jacobian, predicted-measurement
//! vector and noise covariance are assembled to match.
//!
//! A filter track is single-threaded per tag: batches must be applied in
//! timestamp order by one owner. All values here are immutable, so separate
//! tags can be filtered on separate threads without coordination.

use nalgebra::{DMatrix, DVector, Matrix4, Point2, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::models::{
    rss_jacobian_row_clamped, rss_predict_clamped, tdoa_jacobian_row_clamped, tdoa_predict, Anchor,
    AnchorId, Deployment, DwnaParams, PathLossParams, StateTransition,
};

/// Tolerated covariance asymmetry, absolute.
const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Tolerated negative covariance eigenvalue.
const PSD_TOLERANCE: f64 = -1e-9;
/// Position sigma floor for initialization from a degenerate deployment, m.
const INIT_POSITION_SIGMA_FLOOR_M: f64 = 5.0;
/// Initial velocity sigma, m/s. No motion information is available at start.
const INIT_VELOCITY_SIGMA_MPS: f64 = 2.0;

/// Gaussian state estimate: mean `(x, y, vx, vy)` and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// State mean: positions in meters, velocities in m/s.
    pub state: Vector4<f64>,
    /// State covariance; symmetric positive semi-definite.
    pub cov: Matrix4<f64>,
    /// Time this belief refers to, seconds.
    pub timestamp: f64,
}

impl Belief {
    /// Builds a belief, verifying finiteness, symmetry and semi-definiteness.
    pub fn new(state: Vector4<f64>, cov: Matrix4<f64>, timestamp: f64) -> Result<Self> {
        if !timestamp.is_finite() || state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "belief state or timestamp is not finite".into(),
            ));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "belief covariance is not finite".into(),
            ));
        }
        let asym = (cov - cov.transpose()).abs().max();
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "belief covariance asymmetric by {asym:e}"
            )));
        }
        let min_eig = cov
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "belief covariance has eigenvalue {min_eig:e}"
            )));
        }
        Ok(Belief {
            state,
            cov,
            timestamp,
        })
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.state[2], self.state[3])
    }
}

/// One received-signal-strength reading from a BLE anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RssReading {
    pub anchor_id: AnchorId,
    /// Measured power, dBm.
    pub value_dbm: f64,
    /// Assumed measurement standard deviation, dB. Strictly positive.
    pub sigma_db: f64,
}

impl RssReading {
    pub fn new(anchor_id: impl Into<AnchorId>, value_dbm: f64, sigma_db: f64) -> Result<Self> {
        if !value_dbm.is_finite() {
            return Err(Error::invalid("RSS value must be finite"));
        }
        if !(sigma_db.is_finite() && sigma_db > 0.0) {
            return Err(Error::invalid(format!(
                "RSS sigma must be > 0, got {sigma_db}"
            )));
        }
        Ok(RssReading {
            anchor_id: anchor_id.into(),
            value_dbm,
            sigma_db,
        })
    }
}

/// One range-difference reading between a UWB anchor and the reference anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaReading {
    /// Non-reference member of the pair.
    pub anchor_id: AnchorId,
    pub ref_anchor_id: AnchorId,
    /// Range difference `‖tag-anchor‖ - ‖tag-reference‖`, meters.
    pub value_m: f64,
    /// Assumed measurement standard deviation, meters. Strictly positive.
    pub sigma_m: f64,
}

impl TdoaReading {
    pub fn new(
        anchor_id: impl Into<AnchorId>,
        ref_anchor_id: impl Into<AnchorId>,
        value_m: f64,
        sigma_m: f64,
    ) -> Result<Self> {
        let anchor_id = anchor_id.into();
        let ref_anchor_id = ref_anchor_id.into();
        if anchor_id == ref_anchor_id {
            return Err(Error::invalid(format!(
                "TDOA reading pairs anchor `{anchor_id}` with itself"
            )));
        }
        if !value_m.is_finite() {
            return Err(Error::invalid("TDOA value must be finite"));
        }
        if !(sigma_m.is_finite() && sigma_m > 0.0) {
            return Err(Error::invalid(format!(
                "TDOA sigma must be > 0, got {sigma_m}"
            )));
        }
        Ok(TdoaReading {
            anchor_id,
            ref_anchor_id,
            value_m,
            sigma_m,
        })
    }
}

/// All measurements that arrived at one instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementBatch {
    /// Common timestamp of the readings, seconds.
    pub timestamp: f64,
    pub rss: Vec<RssReading>,
    pub tdoa: Vec<TdoaReading>,
}

impl MeasurementBatch {
    pub fn new(timestamp: f64) -> Self {
        MeasurementBatch {
            timestamp,
            rss: Vec::new(),
            tdoa: Vec::new(),
        }
    }

    /// Total number of scalar measurements.
    pub fn len(&self) -> usize {
        self.rss.len() + self.tdoa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Knobs of the measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Model the correlation between TDOA readings that share a reference
    /// anchor. Each shared-reference pair gets an off-diagonal covariance of
    /// `sigma_i * sigma_j / 2`, which is exact when both time-of-arrival
    /// errors have equal variance. Off by default; the diagonal approximation
    /// is more robust to mis-stated sigmas.
    pub correlated_tdoa_noise: bool,
    /// Diagonal jitter added to the innovation covariance before
    /// factorization, (units of the measurement)². Zero by default: a
    /// singular innovation covariance is reported as an error rather than
    /// silently regularized. Set a small positive value for field data.
    pub innovation_jitter: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            correlated_tdoa_noise: false,
            innovation_jitter: 0.0,
        }
    }
}

/// Measurement system of one epoch: stacked observations `z`, model
/// predictions `h(x)`, Jacobian rows and noise covariance, RSS rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSystem {
    pub z: DVector<f64>,
    /// Model-predicted measurement values at the belief state.
    pub predicted: DVector<f64>,
    /// Linearization of the measurement function, one row per reading.
    pub jacobian: DMatrix<f64>,
    /// Measurement noise covariance.
    pub noise_cov: DMatrix<f64>,
}

impl MeasurementSystem {
    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Result of a measurement update: the posterior belief and the innovation
/// `z - h(x)` that produced it, for diagnostics.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub belief: Belief,
    pub innovation: DVector<f64>,
}

/// Sequence of beliefs: the initial belief followed by one per batch.
pub type Track = Vec<Belief>;

/// Time update: propagates the belief by `dt` seconds under the DWNA model.
///
/// `state <- F state`, `P <- F P Fᵀ + Q`, re-symmetrized.
pub fn predict(belief: &Belief, dt: f64, dwna: &DwnaParams) -> Result<Belief> {
    if belief.state.iter().any(|v| !v.is_finite()) || belief.cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState(
            "cannot predict from a non-finite belief".into(),
        ));
    }
    let st = StateTransition::new(dt, dwna)?;
    let state = st.f * belief.state;
    let cov = symmetrize(st.f * belief.cov * st.f.transpose() + st.q);
    Belief::new(state, cov, belief.timestamp + dt)
}

/// Builds the stacked measurement system for a batch at the belief state.
///
/// `z` holds the RSS values then the TDOA values in batch order; `predicted`
/// and `jacobian` are evaluated with the filter-side clamped models so a
/// belief sitting on an anchor cannot abort a run. The noise covariance is
/// diagonal from the per-reading sigmas unless
/// [`FilterConfig::correlated_tdoa_noise`] is set.
pub fn assemble(
    belief: &Belief,
    batch: &MeasurementBatch,
    deployment: &Deployment,
    pl: &PathLossParams,
    config: &FilterConfig,
) -> Result<MeasurementSystem> {
    if batch.is_empty() {
        return Err(Error::invalid("measurement batch is empty"));
    }
    let dim = batch.len();
    let pos = belief.position();

    let mut z = DVector::zeros(dim);
    let mut predicted = DVector::zeros(dim);
    let mut jacobian = DMatrix::zeros(dim, 4);
    let mut noise = DMatrix::zeros(dim, dim);

    let mut row = 0;
    for reading in &batch.rss {
        if !(reading.sigma_db.is_finite() && reading.sigma_db > 0.0) {
            return Err(Error::invalid(format!(
                "RSS reading for `{}` has sigma {}",
                reading.anchor_id, reading.sigma_db
            )));
        }
        let anchor = lookup(deployment, &reading.anchor_id)?;
        z[row] = reading.value_dbm;
        predicted[row] = rss_predict_clamped(&pos, anchor, pl);
        jacobian
            .row_mut(row)
            .copy_from(&rss_jacobian_row_clamped(&pos, anchor, pl));
        noise[(row, row)] = reading.sigma_db * reading.sigma_db;
        row += 1;
    }

    let tdoa_offset = row;
    for reading in &batch.tdoa {
        if !(reading.sigma_m.is_finite() && reading.sigma_m > 0.0) {
            return Err(Error::invalid(format!(
                "TDOA reading for `{}` has sigma {}",
                reading.anchor_id, reading.sigma_m
            )));
        }
        if reading.anchor_id == reading.ref_anchor_id {
            return Err(Error::invalid(format!(
                "TDOA reading pairs anchor `{}` with itself",
                reading.anchor_id
            )));
        }
        let anchor = lookup(deployment, &reading.anchor_id)?;
        let reference = lookup(deployment, &reading.ref_anchor_id)?;
        z[row] = reading.value_m;
        predicted[row] = tdoa_predict_for_filter(&pos, anchor, reference);
        jacobian
            .row_mut(row)
            .copy_from(&tdoa_jacobian_row_clamped(&pos, anchor, reference));
        noise[(row, row)] = reading.sigma_m * reading.sigma_m;
        row += 1;
    }

    if config.correlated_tdoa_noise {
        for (i, a) in batch.tdoa.iter().enumerate() {
            for (j, b) in batch.tdoa.iter().enumerate().skip(i + 1) {
                if a.ref_anchor_id == b.ref_anchor_id {
                    let cov = 0.5 * a.sigma_m * b.sigma_m;
                    noise[(tdoa_offset + i, tdoa_offset + j)] = cov;
                    noise[(tdoa_offset + j, tdoa_offset + i)] = cov;
                }
            }
        }
    }

    Ok(MeasurementSystem {
        z,
        predicted,
        jacobian,
        noise_cov: noise,
    })
}

// tdoa_predict is total for distinct anchors; distinctness was checked above.
fn tdoa_predict_for_filter(pos: &Point2<f64>, anchor: &Anchor, reference: &Anchor) -> f64 {
    tdoa_predict(pos, anchor, reference).expect("distinct anchors checked by caller")
}

fn lookup<'a>(deployment: &'a Deployment, id: &AnchorId) -> Result<&'a Anchor> {
    deployment
        .get(id)
        .ok_or_else(|| Error::UnknownAnchor(id.to_string()))
}

/// Measurement update with a pre-assembled system.
///
/// `K = P Hᵀ (H P Hᵀ + R)⁻¹`, `state <- state + K (z - h)`,
/// `P <- (I - K H) P`, re-symmetrized. The innovation covariance is factored
/// by Cholesky; failure is reported with its eigenvalue range rather than
/// silently regularized.
pub fn update_with_system(
    belief: &Belief,
    system: &MeasurementSystem,
    config: &FilterConfig,
) -> Result<UpdateOutcome> {
    let dim = system.dim();
    if dim == 0 {
        return Err(Error::invalid("measurement system is empty"));
    }
    if system.predicted.len() != dim
        || system.jacobian.nrows() != dim
        || system.jacobian.ncols() != 4
        || system.noise_cov.nrows() != dim
        || system.noise_cov.ncols() != dim
    {
        return Err(Error::invalid(format!(
            "inconsistent measurement system dimensions (z has {dim} rows)"
        )));
    }

    let p = DMatrix::from_column_slice(4, 4, belief.cov.as_slice());
    let hp = &system.jacobian * &p; // H P, dim x 4
    let mut s = &hp * system.jacobian.transpose() + &system.noise_cov;
    if config.innovation_jitter > 0.0 {
        for i in 0..dim {
            s[(i, i)] += config.innovation_jitter;
        }
    }
    s = 0.5 * (&s + s.transpose());

    let chol = match nalgebra::Cholesky::new(s.clone()) {
        Some(c) => c,
        None => {
            let eigs = s.symmetric_eigenvalues();
            let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::Numerical {
                context: "innovation covariance factorization".into(),
                dim,
                min_eig,
                max_eig,
            });
        }
    };

    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ, using symmetry of P and S.
    let gain = chol.solve(&hp).transpose(); // 4 x dim
    let innovation = &system.z - &system.predicted;

    let correction = &gain * &innovation;
    let state =
        belief.state + Vector4::new(correction[0], correction[1], correction[2], correction[3]);

    let kh = &gain * &system.jacobian; // 4 x 4
    let i_kh = DMatrix::identity(4, 4) - kh;
    let p_post = &i_kh * &p;
    let cov = symmetrize(Matrix4::from_iterator(p_post.iter().cloned()));

    let belief = Belief::new(state, cov, belief.timestamp)?;
    Ok(UpdateOutcome { belief, innovation })
}

/// Measurement update straight from a batch: assemble then update.
pub fn update(
    belief: &Belief,
    batch: &MeasurementBatch,
    deployment: &Deployment,
    pl: &PathLossParams,
    config: &FilterConfig,
) -> Result<UpdateOutcome> {
    let system = assemble(belief, batch, deployment, pl, config)?;
    update_with_system(belief, &system, config)
}

/// Initial belief for a deployment: position at the anchor centroid with
/// zero velocity. The position sigma is half the bounding-box diagonal of
/// the anchors, floored at 5 m for degenerate layouts; the velocity sigma
/// is 2 m/s.
pub fn init_belief(deployment: &Deployment, start_time: f64) -> Result<Belief> {
    if deployment.anchors().is_empty() {
        return Err(Error::invalid(
            "initialization requires at least one anchor",
        ));
    }
    if !start_time.is_finite() {
        return Err(Error::invalid("start time must be finite"));
    }
    let centroid = deployment.centroid();
    let (min, max) = deployment.bounding_box();
    let half_diag = 0.5 * (max - min).norm();
    let sigma_p = half_diag.max(INIT_POSITION_SIGMA_FLOOR_M);
    let sigma_v = INIT_VELOCITY_SIGMA_MPS;
    let cov = Matrix4::from_diagonal(&Vector4::new(
        sigma_p * sigma_p,
        sigma_p * sigma_p,
        sigma_v * sigma_v,
        sigma_v * sigma_v,
    ));
    Belief::new(
        Vector4::new(centroid.x, centroid.y, 0.0, 0.0),
        cov,
        start_time,
    )
}

/// Runs the filter over a time-ordered measurement feed.
///
/// Each batch triggers a predict over the elapsed time followed by a joint
/// update; the returned track holds the initial belief followed by one
/// posterior belief per batch. The result is a pure function of the inputs.
pub fn run_filter(
    feed: &[MeasurementBatch],
    deployment: &Deployment,
    pl: &PathLossParams,
    dwna: &DwnaParams,
    init: Belief,
    config: &FilterConfig,
) -> Result<Track> {
    let mut track = Vec::with_capacity(feed.len() + 1);
    let mut current = init;
    track.push(current.clone());
    for (index, batch) in feed.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::invalid(format!(
                "batch {index} at t={} carries no measurements",
                batch.timestamp
            )));
        }
        if batch.timestamp < current.timestamp {
            return Err(Error::OutOfOrder {
                index,
                timestamp: batch.timestamp,
                previous: current.timestamp,
            });
        }
        let dt = batch.timestamp - current.timestamp;
        let predicted = predict(&current, dt, dwna)?;
        current = update(&predicted, batch, deployment, pl, config)?.belief;
        track.push(current.clone());
    }
    Ok(track)
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    0.5 * (m + m.transpose())
}
