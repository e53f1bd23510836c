//! Part-whole registration driver: whole-body fit, then a volume-ordered
//! sweep over the parts with RANSAC and ICP checkpoints.

mod config;
mod matching;
mod session;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use config::{AutoPolicy, Backend, DescriptorSettings, OracleSettings, PipelineConfig};
pub use matching::{descriptor_matches, oracle_matches, OracleRequest};
pub use session::Session;

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geom::{apply_transform, Aabb, Point3, PointCloud, RigidTransform, Vec3};
use crate::partgraph::{JointCheck, PartGraph};
use crate::rigidfit::{soft_procrustes, FitResult, ProcrustesInput};
use crate::scansim::GroundTruth;

/// How far a part got before its transform was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SkippedSmall,
    SkippedFewCorrespondences,
    RansacDone,
    IcpDone,
    JointSkip,
    SkippedByUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointStage {
    Ransac,
    Icp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub transform: RigidTransform,
    pub fitness: f64,
    pub rmse: f64,
    pub inlier_count: usize,
    /// ICP objective per iteration; empty for RANSAC.
    #[serde(default)]
    pub history: Vec<f64>,
}

impl FitDiagnostics {
    fn from_fit(fit: &FitResult, history: Vec<f64>) -> Self {
        FitDiagnostics {
            transform: fit.transform,
            fitness: fit.fitness,
            rmse: fit.rmse,
            inlier_count: fit.inlier_count,
            history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartOutcome {
    pub part: u32,
    pub name: String,
    pub stage: Stage,
    /// Motion on top of the whole-body pose. Parts without a fit of their
    /// own carry the motion of `inherited_from`, or identity.
    pub transform: RigidTransform,
    pub point_count: usize,
    pub feature_points: usize,
    pub correspondences: usize,
    pub roi_points: usize,
    pub anchors: usize,
    pub ransac: Option<FitDiagnostics>,
    pub icp: Option<FitDiagnostics>,
    /// Objective history of every ICP run for this part, retries included.
    pub icp_runs: Vec<Vec<f64>>,
    pub ransac_skipped: bool,
    pub retries: usize,
    pub joint: Option<JointCheck>,
    pub inherited_from: Option<u32>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub part: u32,
    pub part_name: String,
    pub stage: CheckpointStage,
    pub attempt: usize,
    pub candidate: FitDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Start,
    Accept,
    Retry,
    Skip,
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(Command::Start),
            "accept" => Ok(Command::Accept),
            "retry" => Ok(Command::Retry),
            "skip" => Ok(Command::Skip),
            other => Err(Error::InvalidCommand(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Idle,
    AwaitingCommand,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Started,
    WholeBody,
    PartStarted,
    Checkpoint,
    Accepted,
    Retried,
    Skipped,
    PartFinished,
    Completed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    pub kind: EventKind,
    pub part: Option<u32>,
    pub message: String,
}

/// Serializable snapshot of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub scenario_id: String,
    pub status: SessionStatus,
    pub interactive: bool,
    pub step: usize,
    pub order: Vec<u32>,
    pub current_part: Option<u32>,
    pub whole_body: Option<RigidTransform>,
    pub outcomes: Vec<PartOutcome>,
    pub pending: Option<Checkpoint>,
    pub log: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub whole_body: RigidTransform,
    pub whole_body_error: Option<String>,
    pub order: Vec<u32>,
    pub outcomes: Vec<PartOutcome>,
    /// Total motion per part: the part's own motion after the whole-body pose.
    pub part_transforms: BTreeMap<u32, RigidTransform>,
    /// Source points moved by their part's total motion.
    pub registered: PointCloud,
    pub correspondences: CorrespondenceSet,
    pub log: Vec<Event>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct WholeBody {
    pub transform: RigidTransform,
    pub transformed: PointCloud,
}

/// Soft Procrustes over the `top_n` most confident matches, applied to the
/// whole source.
pub fn whole_body_fit(
    source: &PointCloud,
    target: &PointCloud,
    correspondences: &CorrespondenceSet,
    cfg: &PipelineConfig,
) -> Result<WholeBody> {
    let need = cfg.n_min.max(3);
    let wrap = |e: Error| e.context("whole-body fit");
    if correspondences.len() < need {
        return Err(wrap(Error::TooFewCorrespondences {
            have: correspondences.len(),
            need,
        }));
    }
    let transform = soft_procrustes(ProcrustesInput {
        correspondences,
        source: &source.points,
        target: &target.points,
        top_n: cfg.top_n,
    })
    .map_err(wrap)?;
    Ok(WholeBody {
        transform,
        transformed: apply_transform(source, &transform),
    })
}

/// Indices from `candidates` whose point lies inside `aabb` (closed).
pub fn part_feature_points(points: &[Point3], candidates: &[usize], aabb: &Aabb) -> Vec<usize> {
    candidates.iter().copied().filter(|&i| aabb.contains(&points[i])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOfInterest {
    pub aabb: Aabb,
    /// Target indices inside `aabb`, ascending.
    pub indices: Vec<usize>,
}

/// Box enclosing the part and the targets it matched, grown on every side by
/// `padding` times its extent along that axis.
pub fn region_of_interest(
    target: &PointCloud,
    part_points: &[Point3],
    matched_targets: &[usize],
    padding: f64,
) -> Result<RegionOfInterest> {
    let mut aabb = Aabb::from_points(part_points).ok_or(Error::EmptySelection)?;
    for &j in matched_targets {
        aabb.grow(&target.points[j]);
    }
    let pad: Vec3 = aabb.extents() * padding;
    let aabb = Aabb {
        min: aabb.min - pad,
        max: aabb.max + pad,
    };
    let indices = (0..target.len()).filter(|&j| aabb.contains(&target.points[j])).collect();
    Ok(RegionOfInterest { aabb, indices })
}

/// Runs the whole pipeline in auto mode.
pub fn run_pipeline(
    source: &PointCloud,
    graph: &PartGraph,
    target: &PointCloud,
    truth: Option<&GroundTruth>,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    let cfg = PipelineConfig {
        interactive: false,
        ..cfg.clone()
    };
    let mut session = Session::new("run", source.clone(), graph.clone(), target.clone(), truth.cloned(), cfg)?;
    session.start()?;
    session.into_result()
}
