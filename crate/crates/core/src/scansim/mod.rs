//! Synthetic articulated models, ground-truth deformations, degraded scans
//! and target segmentation.

mod dbscan;
mod deform;
mod degrade;
mod models;
mod presets;
mod sampling;

pub use dbscan::{dbscan, segment_target, Segmentation};
pub use deform::{apply_deformation, DeformationSpec, GroundTruth};
pub use degrade::{degrade, Hole, PartialView, RandomHoles, ScanSpec};
pub use models::{build_lander_like, build_robot_like, ArticulatedModel, Hinge, ModelKind};
pub use presets::{generate_scenario, Experiment, Scenario, DEFAULT_SCALE};
