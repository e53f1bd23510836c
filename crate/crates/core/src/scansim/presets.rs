use serde::{Deserialize, Serialize};

use super::deform::{apply_deformation, DeformationSpec, GroundTruth};
use super::degrade::{degrade, PartialView, RandomHoles, ScanSpec};
use super::models::{ArticulatedModel, ModelKind};
use crate::error::{Error, Result};
use crate::geom::{aabb_of, Point3, PointCloud, RigidTransform, Vec3};
use crate::seed;
use rand::Rng;

/// Factor applied to the base model units before registration.
pub const DEFAULT_SCALE: f64 = 10.0;

const LOW_NOISE: f64 = 0.002;
const HIGH_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    E1,
    E2,
    E3,
    E4,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::E1, Experiment::E2, Experiment::E3, Experiment::E4];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::E3 => "e3",
            Experiment::E4 => "e4",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(Experiment::E1),
            "e2" => Ok(Experiment::E2),
            "e3" => Ok(Experiment::E3),
            "e4" => Ok(Experiment::E4),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

/// A generated registration problem with exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: ArticulatedModel,
    pub target: PointCloud,
    pub deformation: DeformationSpec,
    pub scan: ScanSpec,
    pub truth: GroundTruth,
}

impl Scenario {
    /// Deforms `source` and scans the result. The target carries no labels.
    pub fn build(name: impl Into<String>, source: ArticulatedModel, deformation: DeformationSpec, scan: ScanSpec) -> Result<Scenario> {
        let (posed, truth) = apply_deformation(&source, &deformation)?;
        let (target, truth) = degrade(&PointCloud::new(posed.points), &truth, &scan)?;
        Ok(Scenario {
            name: name.into(),
            source,
            target,
            deformation,
            scan,
            truth,
        })
    }

    pub fn diagonal(&self) -> f64 {
        aabb_of(&self.source.cloud, None).map(|b| b.diagonal()).unwrap_or(0.0)
    }
}

fn hinge_angles(experiment: Experiment, kind: ModelKind) -> &'static [(u32, f64)] {
    match (experiment, kind) {
        (Experiment::E1, _) => &[],
        (Experiment::E2, ModelKind::Lander) => &[(7, 30.0)],
        (Experiment::E2, ModelKind::Robot) => &[(2, 35.0)],
        (_, ModelKind::Lander) => &[(7, 30.0), (9, -20.0), (11, 25.0), (12, 20.0)],
        (_, ModelKind::Robot) => &[(2, 35.0), (6, -25.0), (1, 15.0), (3, 20.0)],
    }
}

/// Seeded moderate whole-body pose about the model centroid.
fn body_pose(seed: u64, centroid: &Point3, diag: f64) -> RigidTransform {
    let mut rng = seed::rng(seed::derive(seed, &[10]));
    let axis = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(10.0f64..30.0).to_radians();
    let shift = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (0.05 * diag);
    RigidTransform::from_translation(shift).compose(&RigidTransform::about_line(centroid, &axis, angle))
}

/// Builds one of the four experiment regimes for a model.
pub fn generate_scenario(experiment: Experiment, kind: ModelKind, seed: u64) -> Result<Scenario> {
    let source = kind.build().scaled(DEFAULT_SCALE)?;
    let diag = aabb_of(&source.cloud, None)?.diagonal();
    let centroid = source.cloud.centroid().ok_or(Error::EmptyCloud)?;
    let mut deformation = DeformationSpec::with_pose(body_pose(seed, &centroid, diag));
    for &(part, angle) in hinge_angles(experiment, kind) {
        deformation = deformation.hinge(part, angle);
    }
    let mut scan = ScanSpec {
        noise_sigma: LOW_NOISE * diag,
        seed: seed::derive(seed, &[11]),
        ..Default::default()
    };
    if experiment == Experiment::E4 {
        scan.noise_sigma = HIGH_NOISE * diag;
        scan.random_holes = Some(RandomHoles { count: 8, radius: 0.04 * diag });
        scan.outlier_count = 100;
        scan.partial_view = Some(PartialView {
            direction: view_direction(&source, &deformation)?,
            overlap: 0.45,
        });
    }
    Scenario::build(format!("{}-{}", experiment.name(), kind.name()), source, deformation, scan)
}

/// Direction from the posed centroid towards the deformed parts, so the
/// partial view keeps what moved.
fn view_direction(source: &ArticulatedModel, deformation: &DeformationSpec) -> Result<Vec3> {
    let (posed, _) = apply_deformation(source, deformation)?;
    let all = posed.centroid().ok_or(Error::EmptyCloud)?;
    let moved: Vec<usize> = deformation
        .deformed_parts()
        .iter()
        .flat_map(|&p| posed.indices_of_part(p))
        .collect();
    let dir = posed.select(&moved).centroid().map(|c| c - all).unwrap_or_else(Vec3::zeros);
    Ok(if dir.norm() > 1e-9 { dir } else { deformation.whole_body.apply_vector(&Vec3::z()) })
}
