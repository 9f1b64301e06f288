//! Hybrid BLE/UWB indoor localization.
//!
//! An Extended Kalman Filter fuses high-rate received-signal-strength (RSS)
//! readings from BLE anchors with low-rate time-difference-of-arrival (TDOA)
//! readings from UWB anchors. The RSS stream keeps the location update rate
//! high at low energy cost; the occasional TDOA batch pulls the estimate
//! back toward the accurate UWB solution. The crate also ships a scenario
//! simulator and a trajectory-error evaluation pipeline so fusion variants
//! can be compared on identical measurement noise.
//!
//! Modules:
//!
//! - [`models`]: DWNA kinematics and the RSS / TDOA measurement models with
//!   analytic Jacobians;
//! - [`ekf`]: the variable-dimension filter itself;
//! - [`sim`]: ground-truth trajectories, measurement synthesis, schedules;
//! - [`metrics`]: distance-to-trajectory errors, ECDFs and summaries;
//! - [`io`]: the scenario config and CSV file formats.

pub mod ekf;
pub mod error;
pub mod io;
pub mod metrics;
pub mod models;
pub mod sim;

pub use nalgebra::{Point2, Vector2, Vector4};

pub use ekf::{
    Belief, FilterConfig, MeasurementBatch, MeasurementSystem, RssReading, TdoaReading, Track,
};
pub use error::{Error, Result};
pub use metrics::{CdfCurve, ErrorSeries, Summary};
pub use models::{
    Anchor, AnchorId, Deployment, DwnaParams, PathLossParams, Technology, GEOMETRY_EPSILON,
    SPEED_OF_LIGHT,
};
pub use sim::{FilterMode, GroundTruth, ScenarioConfig, ScenarioOutput, Trajectory, TruthSample};
