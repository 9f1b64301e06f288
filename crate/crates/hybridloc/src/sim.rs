//! Scenario simulation: ground-truth trajectories, measurement synthesis
//! and scheduling.
//!
//! A scenario walks a tag along a waypoint polyline at constant speed while
//! BLE anchors report shadowed RSS at one rate and UWB anchors report TDOA
//! at another. RSS and TDOA noise come from separate, named RNG substreams
//! of the scenario seed, so sweeping one measurement rate never perturbs the
//! other stream's noise realization and filter variants can be compared on
//! identical data.
//!
//! Each [`run_scenario`] call is pure given its config; Monte-Carlo sweeps
//! may run scenarios concurrently with per-run seeds derived as seed + run
//! index.

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use std::str::FromStr;

use crate::ekf::{
    init_belief, run_filter, FilterConfig, MeasurementBatch, RssReading, TdoaReading, Track,
};
use crate::error::{Error, Result};
use crate::models::{
    rss_predict, Anchor, Deployment, DwnaParams, PathLossParams, Technology, SPEED_OF_LIGHT,
};

/// RNG substream carrying RSS shadowing noise.
const RSS_STREAM: u64 = 1;
/// RNG substream carrying TDOA timing noise.
const TDOA_STREAM: u64 = 2;

/// Measurement sigma attached to RSS readings when the simulated shadowing
/// level is zero, dB. A filter cannot run with zero measurement noise, so
/// noiseless simulations keep this assumed value.
pub const DEFAULT_RSS_SIGMA_DB: f64 = 3.0;

/// Default standard deviation of simulated time-of-arrival errors, seconds.
pub const DEFAULT_TOA_SIGMA_S: f64 = 0.2e-9;

/// Per-reading TDOA sigma implied by a time-of-arrival sigma: the difference
/// of two independent arrival times, expressed as a range, `√2·c·σ_toa`.
pub fn tdoa_sigma_from_toa(toa_sigma_s: f64) -> f64 {
    std::f64::consts::SQRT_2 * SPEED_OF_LIGHT * toa_sigma_s
}

/// Which measurements a filter run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// RSS and TDOA fused jointly.
    Hybrid,
    /// RSS readings only.
    RssOnly,
    /// TDOA readings only.
    TdoaOnly,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(FilterMode::Hybrid),
            "rss" => Ok(FilterMode::RssOnly),
            "tdoa" => Ok(FilterMode::TdoaOnly),
            other => Err(Error::invalid(format!(
                "unknown filter mode `{other}` (expected hybrid, rss or tdoa)"
            ))),
        }
    }
}

/// Full description of a simulation run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub anchors: Vec<Anchor>,
    /// Waypoints of the walked polyline, meters.
    pub waypoints: Vec<Point2<f64>>,
    /// Walking speed, m/s.
    pub speed_mps: f64,
    /// RSS measurement rate, Hz.
    pub rss_rate_hz: f64,
    /// TDOA measurement rate, Hz.
    pub tdoa_rate_hz: f64,
    /// Log-normal shadowing level applied to simulated RSS, dB.
    pub shadow_sigma_db: f64,
    /// Standard deviation of simulated time-of-arrival errors, seconds.
    pub toa_sigma_s: f64,
    pub path_loss: PathLossParams,
    pub dwna: DwnaParams,
    /// Simulated duration, seconds. Defaults to path length / speed.
    pub duration_s: Option<f64>,
    /// Seed of the measurement-noise generator.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// A 10 m × 10 m room: BLE anchors at the wall midpoints, UWB anchors at
    /// the corners, and a rectangular walking loop 2 m inside the walls.
    fn default() -> Self {
        ScenarioConfig {
            anchors: vec![
                Anchor::new("b1", 5.0, 0.0, Technology::Ble),
                Anchor::new("b2", 10.0, 5.0, Technology::Ble),
                Anchor::new("b3", 5.0, 10.0, Technology::Ble),
                Anchor::new("b4", 0.0, 5.0, Technology::Ble),
                Anchor::new("u1", 0.0, 0.0, Technology::Uwb),
                Anchor::new("u2", 10.0, 0.0, Technology::Uwb),
                Anchor::new("u3", 10.0, 10.0, Technology::Uwb),
                Anchor::new("u4", 0.0, 10.0, Technology::Uwb),
            ],
            waypoints: vec![
                Point2::new(2.0, 2.0),
                Point2::new(8.0, 2.0),
                Point2::new(8.0, 8.0),
                Point2::new(2.0, 8.0),
                Point2::new(2.0, 2.0),
            ],
            speed_mps: 1.4,
            rss_rate_hz: 10.0,
            tdoa_rate_hz: 0.5,
            shadow_sigma_db: 3.0,
            toa_sigma_s: DEFAULT_TOA_SIGMA_S,
            path_loss: PathLossParams::new(-40.0, 1.0, 1.9)
                .expect("default path loss parameters are valid"),
            dwna: DwnaParams::default(),
            duration_s: None,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Checks invariants; returns non-fatal observability warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        Deployment::new(self.anchors.clone())?;
        if self.waypoints.len() < 2 {
            return Err(Error::invalid("at least 2 waypoints are required"));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(Error::invalid(format!(
                "speed_mps must be > 0, got {}",
                self.speed_mps
            )));
        }
        for (name, rate) in [
            ("rss_rate_hz", self.rss_rate_hz),
            ("tdoa_rate_hz", self.tdoa_rate_hz),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {rate}")));
            }
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return Err(Error::invalid(format!(
                "shadow_sigma_db must be >= 0, got {}",
                self.shadow_sigma_db
            )));
        }
        if !(self.toa_sigma_s.is_finite() && self.toa_sigma_s >= 0.0) {
            return Err(Error::invalid(format!(
                "toa_sigma_ns must be >= 0, got {}",
                self.toa_sigma_s * 1e9
            )));
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::invalid(format!("duration_s must be > 0, got {d}")));
            }
        }
        let mut warnings = Vec::new();
        let ble = self
            .anchors
            .iter()
            .filter(|a| a.tech == Technology::Ble)
            .count();
        let uwb = self
            .anchors
            .iter()
            .filter(|a| a.tech == Technology::Uwb)
            .count();
        if ble < 3 {
            warnings.push(format!(
                "only {ble} BLE anchor(s); at least 3 are needed for RSS observability"
            ));
        }
        if uwb < 3 {
            warnings.push(format!(
                "only {uwb} UWB anchor(s); at least 3 are needed for TDOA observability"
            ));
        }
        Ok(warnings)
    }
}

/// One ground-truth sample along the walked path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    /// True position, meters.
    pub position: Point2<f64>,
    /// True velocity, m/s.
    pub velocity: Vector2<f64>,
}

/// Ground truth of a run: time-ordered samples plus the waypoint polyline
/// they lie on.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
    pub polyline: Vec<Point2<f64>>,
}

/// Constant-speed parametrization of a waypoint polyline.
///
/// Direction changes instantaneously at corners; a query exactly on a corner
/// reports the outgoing segment's velocity. Beyond the end of the path the
/// position holds at the final waypoint with zero velocity.
#[derive(Debug, Clone)]
pub struct Trajectory {
    waypoints: Vec<Point2<f64>>,
    speed: f64,
    /// Arc length from the start to each waypoint.
    cumulative: Vec<f64>,
}

impl Trajectory {
    pub fn new(waypoints: &[Point2<f64>], speed: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("a trajectory needs at least 2 waypoints"));
        }
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::invalid(format!("speed must be > 0, got {speed}")));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        cumulative.push(0.0);
        for (i, pair) in waypoints.windows(2).enumerate() {
            if !(pair[1].x.is_finite() && pair[1].y.is_finite())
                || !(pair[0].x.is_finite() && pair[0].y.is_finite())
            {
                return Err(Error::invalid(format!("waypoint {i} is not finite")));
            }
            let len = (pair[1] - pair[0]).norm();
            if len < 1e-12 {
                return Err(Error::invalid(format!(
                    "waypoints {i} and {} coincide",
                    i + 1
                )));
            }
            cumulative.push(cumulative[i] + len);
        }
        Ok(Trajectory {
            waypoints: waypoints.to_vec(),
            speed,
            cumulative,
        })
    }

    /// Total polyline length, meters.
    pub fn path_length(&self) -> f64 {
        *self.cumulative.last().expect("at least two waypoints")
    }

    /// Time to traverse the full polyline, seconds.
    pub fn duration(&self) -> f64 {
        self.path_length() / self.speed
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let last_segment = self.waypoints.len() - 2;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= s)
            .saturating_sub(1)
            .min(last_segment);
        (idx, s - self.cumulative[idx])
    }

    pub fn position_at(&self, t: f64) -> Point2<f64> {
        let s = (self.speed * t).clamp(0.0, self.path_length());
        let (idx, offset) = self.segment_at(s);
        let dir = self.direction(idx);
        self.waypoints[idx] + dir * offset
    }

    pub fn velocity_at(&self, t: f64) -> Vector2<f64> {
        if t * self.speed >= self.path_length() {
            return Vector2::zeros();
        }
        let s = (self.speed * t).max(0.0);
        let (idx, _) = self.segment_at(s);
        self.direction(idx) * self.speed
    }

    fn direction(&self, segment: usize) -> Vector2<f64> {
        let d = self.waypoints[segment + 1] - self.waypoints[segment];
        d / d.norm()
    }
}

/// Samples a constant-speed traversal of `waypoints` every `tick` seconds.
pub fn build_trajectory(waypoints: &[Point2<f64>], speed: f64, tick: f64) -> Result<GroundTruth> {
    if !(tick.is_finite() && tick > 0.0) {
        return Err(Error::invalid(format!("tick must be > 0, got {tick}")));
    }
    let traj = Trajectory::new(waypoints, speed)?;
    let steps = (traj.duration() / tick + 1e-9).floor() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 * tick;
            TruthSample {
                t,
                position: traj.position_at(t),
                velocity: traj.velocity_at(t),
            }
        })
        .collect();
    Ok(GroundTruth {
        samples,
        polyline: waypoints.to_vec(),
    })
}

/// Simulates one RSS reading per BLE anchor at `pos`.
///
/// Each value is the path-loss prediction plus an independent zero-mean
/// Gaussian of `shadow_sigma_db`. Readings carry that sigma as their assumed
/// measurement noise, except that a zero shadowing level falls back to
/// [`DEFAULT_RSS_SIGMA_DB`] so downstream filtering keeps a positive noise
/// floor.
pub fn simulate_rss(
    pos: &Point2<f64>,
    anchors: &[Anchor],
    pl: &PathLossParams,
    shadow_sigma_db: f64,
    rng: &mut impl Rng,
) -> Result<Vec<RssReading>> {
    if !(shadow_sigma_db.is_finite() && shadow_sigma_db >= 0.0) {
        return Err(Error::invalid(format!(
            "shadow sigma must be >= 0, got {shadow_sigma_db}"
        )));
    }
    let reading_sigma = if shadow_sigma_db > 0.0 {
        shadow_sigma_db
    } else {
        DEFAULT_RSS_SIGMA_DB
    };
    let shadowing = Normal::new(0.0, shadow_sigma_db)
        .map_err(|e| Error::invalid(format!("shadowing distribution: {e}")))?;
    let mut readings = Vec::new();
    for anchor in anchors.iter().filter(|a| a.tech == Technology::Ble) {
        let noise = if shadow_sigma_db > 0.0 {
            shadowing.sample(rng)
        } else {
            0.0
        };
        let value = rss_predict(pos, anchor, pl)? + noise;
        readings.push(RssReading::new(anchor.id.clone(), value, reading_sigma)?);
    }
    Ok(readings)
}

/// Simulates TDOA readings at `pos` against the fixed reference anchor (the
/// first UWB anchor in id order).
///
/// Every UWB anchor's arrival time gets an independent zero-mean Gaussian of
/// `toa_sigma_s`; differences against the reference are converted to meters.
/// Readings carry `√2·c·toa_sigma_s` as their sigma, falling back to the
/// value implied by [`DEFAULT_TOA_SIGMA_S`] when simulating noiselessly.
pub fn simulate_tdoa(
    pos: &Point2<f64>,
    anchors: &[Anchor],
    toa_sigma_s: f64,
    rng: &mut impl Rng,
) -> Result<Vec<TdoaReading>> {
    if !(toa_sigma_s.is_finite() && toa_sigma_s >= 0.0) {
        return Err(Error::invalid(format!(
            "TOA sigma must be >= 0, got {toa_sigma_s}"
        )));
    }
    let mut uwb: Vec<&Anchor> = anchors
        .iter()
        .filter(|a| a.tech == Technology::Uwb)
        .collect();
    if uwb.len() < 2 {
        return Err(Error::invalid(format!(
            "TDOA needs at least 2 UWB anchors, got {}",
            uwb.len()
        )));
    }
    uwb.sort_by(|a, b| a.id.cmp(&b.id));

    let reading_sigma = if toa_sigma_s > 0.0 {
        tdoa_sigma_from_toa(toa_sigma_s)
    } else {
        tdoa_sigma_from_toa(DEFAULT_TOA_SIGMA_S)
    };
    let timing = Normal::new(0.0, toa_sigma_s)
        .map_err(|e| Error::invalid(format!("timing distribution: {e}")))?;
    let toas: Vec<f64> = uwb
        .iter()
        .map(|anchor| {
            let range = (pos - anchor.position).norm();
            let noise = if toa_sigma_s > 0.0 {
                timing.sample(rng)
            } else {
                0.0
            };
            range / SPEED_OF_LIGHT + noise
        })
        .collect();

    let reference = uwb[0];
    let readings = uwb
        .iter()
        .zip(&toas)
        .skip(1)
        .map(|(anchor, &toa)| {
            TdoaReading::new(
                anchor.id.clone(),
                reference.id.clone(),
                (toa - toas[0]) * SPEED_OF_LIGHT,
                reading_sigma,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(readings)
}

/// One epoch of the measurement schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEvent {
    pub t: f64,
    /// RSS measurements fire at this epoch.
    pub rss: bool,
    /// TDOA measurements fire at this epoch.
    pub tdoa: bool,
}

/// Event times of both measurement streams over `(0, duration]`.
///
/// Stream `k` fires at `i / rate_k` for `i >= 1`; coincident epochs merge
/// into one event so simultaneous readings later share a batch.
pub fn schedule(
    rss_rate_hz: f64,
    tdoa_rate_hz: f64,
    duration_s: f64,
) -> Result<Vec<ScheduleEvent>> {
    for (name, rate) in [("rss rate", rss_rate_hz), ("tdoa rate", tdoa_rate_hz)] {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("{name} must be > 0, got {rate}")));
        }
    }
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(Error::invalid(format!(
            "duration must be >= 0, got {duration_s}"
        )));
    }
    let count = |rate: f64| (duration_s * rate + 1e-9).floor() as u64;
    let mut events: Vec<ScheduleEvent> = Vec::new();
    let (mut i, mut j) = (1u64, 1u64);
    let (n_rss, n_tdoa) = (count(rss_rate_hz), count(tdoa_rate_hz));
    while i <= n_rss || j <= n_tdoa {
        let t_rss = if i <= n_rss {
            i as f64 / rss_rate_hz
        } else {
            f64::INFINITY
        };
        let t_tdoa = if j <= n_tdoa {
            j as f64 / tdoa_rate_hz
        } else {
            f64::INFINITY
        };
        if t_rss < t_tdoa {
            events.push(ScheduleEvent {
                t: t_rss,
                rss: true,
                tdoa: false,
            });
            i += 1;
        } else if t_tdoa < t_rss {
            events.push(ScheduleEvent {
                t: t_tdoa,
                rss: false,
                tdoa: true,
            });
            j += 1;
        } else {
            events.push(ScheduleEvent {
                t: t_rss,
                rss: true,
                tdoa: true,
            });
            i += 1;
            j += 1;
        }
    }
    Ok(events)
}

/// Everything a simulated run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub truth: GroundTruth,
    /// Hybrid-filter track over the full feed.
    pub track: Track,
    /// The raw measurement feed; replay it through [`filter_feed`] with a
    /// different [`FilterMode`] to compare variants on identical noise.
    pub feed: Vec<MeasurementBatch>,
}

/// Simulates a scenario end to end: ground truth, measurement feed and the
/// hybrid filter track. Deterministic given the config (including its seed).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let deployment = Deployment::new(cfg.anchors.clone())?;
    let trajectory = Trajectory::new(&cfg.waypoints, cfg.speed_mps)?;
    let duration = cfg.duration_s.unwrap_or_else(|| trajectory.duration());
    let events = schedule(cfg.rss_rate_hz, cfg.tdoa_rate_hz, duration)?;

    let mut rss_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rss_rng.set_stream(RSS_STREAM);
    let mut tdoa_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    tdoa_rng.set_stream(TDOA_STREAM);

    let mut feed = Vec::with_capacity(events.len());
    let mut samples = Vec::with_capacity(events.len() + 1);
    samples.push(TruthSample {
        t: 0.0,
        position: trajectory.position_at(0.0),
        velocity: trajectory.velocity_at(0.0),
    });
    for event in &events {
        let position = trajectory.position_at(event.t);
        let mut batch = MeasurementBatch::new(event.t);
        if event.rss {
            batch.rss = simulate_rss(
                &position,
                deployment.anchors(),
                &cfg.path_loss,
                cfg.shadow_sigma_db,
                &mut rss_rng,
            )?;
        }
        if event.tdoa {
            batch.tdoa = simulate_tdoa(
                &position,
                deployment.anchors(),
                cfg.toa_sigma_s,
                &mut tdoa_rng,
            )?;
        }
        samples.push(TruthSample {
            t: event.t,
            position,
            velocity: trajectory.velocity_at(event.t),
        });
        feed.push(batch);
    }

    let init = init_belief(&deployment, 0.0)?;
    let track = run_filter(
        &feed,
        &deployment,
        &cfg.path_loss,
        &cfg.dwna,
        init,
        &FilterConfig::default(),
    )?;

    Ok(ScenarioOutput {
        truth: GroundTruth {
            samples,
            polyline: cfg.waypoints.clone(),
        },
        track,
        feed,
    })
}

/// Projects a feed onto a filter mode: strips the other technology's
/// readings and drops batches that end up empty.
pub fn apply_mode(feed: &[MeasurementBatch], mode: FilterMode) -> Vec<MeasurementBatch> {
    feed.iter()
        .filter_map(|batch| {
            let mut projected = batch.clone();
            match mode {
                FilterMode::Hybrid => {}
                FilterMode::RssOnly => projected.tdoa.clear(),
                FilterMode::TdoaOnly => projected.rss.clear(),
            }
            if projected.is_empty() {
                None
            } else {
                Some(projected)
            }
        })
        .collect()
}

/// Runs the filter for one mode over a shared feed, using the scenario's
/// deployment and model parameters.
pub fn filter_feed(
    cfg: &ScenarioConfig,
    feed: &[MeasurementBatch],
    mode: FilterMode,
) -> Result<Track> {
    let deployment = Deployment::new(cfg.anchors.clone())?;
    let projected = apply_mode(feed, mode);
    let init = init_belief(&deployment, 0.0)?;
    run_filter(
        &projected,
        &deployment,
        &cfg.path_loss,
        &cfg.dwna,
        init,
        &FilterConfig::default(),
    )
}
