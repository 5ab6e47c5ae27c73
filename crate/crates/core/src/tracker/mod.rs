//! Online tracking: candidate sampling, selection, sample stores, online
//! updates and box refinement.

mod bbox;
mod dataset;
mod online;
mod regression;
mod sampling;
mod store;
mod trajectory;

pub use bbox::{iou, BBox};
pub use dataset::domain_dataset;
pub use online::{
    build_update_batch, patch_features, run_tracker, run_tracker_detailed, score_and_select, select_best, FrameOutcome,
    Selection, Tracker, TrackerConfig, TrackerState, UpdateBatch, UpdateKind,
};
pub use regression::RegressionModel;
pub use sampling::{
    collect_training_samples, regression_samples, sample_candidates, ParticleConfig, SampleCounts, SampleThresholds,
    ATTEMPTS_PER_SAMPLE, MIN_EXTENT,
};
pub use store::SampleStore;
pub use trajectory::{Trajectory, TrajectoryRecord};
