//! Shared fixtures for the criterion benchmarks.

use hybridloc::ekf::{MeasurementBatch, RssReading, TdoaReading};
use hybridloc::models::Deployment;
use hybridloc::sim::ScenarioConfig;
use hybridloc::{PathLossParams, Point2};

/// The default 10 m x 10 m deployment.
pub fn default_deployment() -> Deployment {
    Deployment::new(ScenarioConfig::default().anchors).expect("default anchors are valid")
}

pub fn default_path_loss() -> PathLossParams {
    ScenarioConfig::default().path_loss
}

/// A full hybrid batch (4 RSS + 3 TDOA rows) consistent with a tag at `pos`.
pub fn hybrid_batch(deployment: &Deployment, pos: Point2<f64>, t: f64) -> MeasurementBatch {
    let pl = default_path_loss();
    let reference = deployment.uwb_reference().expect("uwb anchors").clone();
    let mut batch = MeasurementBatch::new(t);
    for anchor in deployment.ble() {
        let value = hybridloc::models::rss_predict(&pos, anchor, &pl).expect("clear of anchors");
        batch
            .rss
            .push(RssReading::new(anchor.id.clone(), value, 3.0).expect("valid reading"));
    }
    for anchor in deployment.uwb() {
        if anchor.id != reference.id {
            let value =
                hybridloc::models::tdoa_predict(&pos, anchor, &reference).expect("distinct pair");
            batch.tdoa.push(
                TdoaReading::new(anchor.id.clone(), reference.id.clone(), value, 0.0848)
                    .expect("valid reading"),
            );
        }
    }
    batch
}
