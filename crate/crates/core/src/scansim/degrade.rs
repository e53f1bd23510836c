use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::deform::GroundTruth;
use crate::error::{Error, Result};
use crate::features::subsample;
use crate::geom::{Aabb, Point3, PointCloud, Vec3};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: Point3,
    pub radius: f64,
}

/// Holes centred on randomly chosen surviving points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomHoles {
    pub count: usize,
    pub radius: f64,
}

/// Half-space cut keeping the `overlap` fraction of points that lie furthest
/// along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialView {
    pub direction: Vec3,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSpec {
    pub noise_sigma: f64,
    pub holes: Vec<Hole>,
    pub random_holes: Option<RandomHoles>,
    pub outlier_count: usize,
    /// Region for uniform outliers; defaults to the scan bounds grown by 10%.
    pub outlier_region: Option<Aabb>,
    pub retention: f64,
    pub partial_view: Option<PartialView>,
    pub clutter_count: usize,
    pub seed: u64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            noise_sigma: 0.0,
            holes: Vec::new(),
            random_holes: None,
            outlier_count: 0,
            outlier_region: None,
            retention: 1.0,
            partial_view: None,
            clutter_count: 0,
            seed: 0,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be finite and non-negative");
        }
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return bad("retention must lie in (0, 1]");
        }
        if self.holes.iter().any(|h| !(h.radius >= 0.0)) || self.random_holes.is_some_and(|h| !(h.radius >= 0.0)) {
            return bad("hole radius must be non-negative");
        }
        if let Some(v) = &self.partial_view {
            if !(v.overlap > 0.0 && v.overlap <= 1.0) || !(v.direction.norm() > 0.0) {
                return bad("partial view needs overlap in (0, 1] and a nonzero direction");
            }
        }
        Ok(())
    }
}

const CLUTTER_BLOBS: usize = 3;

/// Simulates scanning artefacts on a target cloud. Steps run in a fixed
/// order: partial-view cut, holes, noise, outliers, clutter, retention
/// subsampling. Appended points have no ground-truth preimage. Part labels
/// survive only when no points are appended.
pub fn degrade(cloud: &PointCloud, truth: &GroundTruth, spec: &ScanSpec) -> Result<(PointCloud, GroundTruth)> {
    spec.validate()?;
    let preimage = truth.preimages(cloud.len());
    let mut origin: Vec<Option<usize>> = (0..cloud.len()).map(Some).collect();
    let mut points = cloud.points.clone();

    if let Some(view) = &spec.partial_view {
        let d = view.direction.normalize();
        let keep = (view.overlap * points.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| d.dot(&points[b].coords).total_cmp(&d.dot(&points[a].coords)).then(a.cmp(&b)));
        let mut kept = order[..keep.min(order.len())].to_vec();
        kept.sort_unstable();
        retain(&mut points, &mut origin, &kept);
    }

    let mut holes = spec.holes.clone();
    if let Some(r) = spec.random_holes {
        let mut rng = seed::rng(seed::derive(spec.seed, &[1]));
        if !points.is_empty() {
            for _ in 0..r.count {
                let c = points[rng.random_range(0..points.len())];
                holes.push(Hole { center: c, radius: r.radius });
            }
        }
    }
    if !holes.is_empty() {
        let kept: Vec<usize> = (0..points.len())
            .filter(|&i| holes.iter().all(|h| (points[i] - h.center).norm() > h.radius))
            .collect();
        retain(&mut points, &mut origin, &kept);
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = seed::rng(seed::derive(spec.seed, &[2]));
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for p in &mut points {
            *p += Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }

    let bounds = Aabb::from_points(&points).or_else(|| Aabb::from_points(&cloud.points));
    if spec.outlier_count > 0 {
        let region = spec
            .outlier_region
            .or_else(|| bounds.map(|b| b.inflated(0.1 * b.diagonal())))
            .ok_or(Error::EmptyCloud)?;
        let mut rng = seed::rng(seed::derive(spec.seed, &[3]));
        for _ in 0..spec.outlier_count {
            points.push(Point3::new(
                uniform(&mut rng, region.min.x, region.max.x),
                uniform(&mut rng, region.min.y, region.max.y),
                uniform(&mut rng, region.min.z, region.max.z),
            ));
            origin.push(None);
        }
    }

    if spec.clutter_count > 0 {
        let b = bounds.ok_or(Error::EmptyCloud)?;
        let diag = b.diagonal().max(f64::EPSILON);
        let mut rng = seed::rng(seed::derive(spec.seed, &[4]));
        let spread = Normal::new(0.0, 0.03 * diag).expect("positive spread");
        let centers: Vec<Point3> = (0..CLUTTER_BLOBS)
            .map(|k| {
                let a = std::f64::consts::TAU * (k as f64 + rng.random_range(0.0..0.5)) / CLUTTER_BLOBS as f64;
                b.center() + Vec3::new(a.cos(), a.sin(), 0.0) * (0.9 * diag)
            })
            .collect();
        for k in 0..spec.clutter_count {
            let c = centers[k % CLUTTER_BLOBS];
            points.push(c + Vec3::new(spread.sample(&mut rng), spread.sample(&mut rng), spread.sample(&mut rng)));
            origin.push(None);
        }
    }

    if spec.retention < 1.0 && !points.is_empty() {
        let (_, kept) = subsample(&PointCloud::new(points.clone()), spec.retention, seed::derive(spec.seed, &[5]))?;
        retain(&mut points, &mut origin, &kept);
    }

    let appended = spec.outlier_count + spec.clutter_count > 0;
    let out = match (&cloud.part_ids, appended) {
        (Some(ids), false) => {
            let labels = origin.iter().map(|o| ids[o.expect("no appended points")]).collect();
            PointCloud::with_part_ids(points, labels)?
        }
        _ => PointCloud::new(points),
    };
    let correspondences = origin
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.and_then(|i| preimage[i]).map(|s| (s, j)))
        .collect();
    Ok((
        out,
        GroundTruth {
            correspondences,
            ..truth.clone()
        },
    ))
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn retain(points: &mut Vec<Point3>, origin: &mut Vec<Option<usize>>, kept: &[usize]) {
    *points = kept.iter().map(|&i| points[i]).collect();
    *origin = kept.iter().map(|&i| origin[i]).collect();
}
