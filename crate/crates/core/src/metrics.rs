//! Registration quality measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geom::{Point3, PointCloud, RigidTransform};
use crate::nn::NnIndex;
use crate::partgraph::PartGraph;

pub const DEFAULT_BIN_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InlierRatio {
    pub ratio: f64,
    pub correct: usize,
    pub total: usize,
    /// Set when the predicted set was empty (ratio then reads 0).
    pub empty: bool,
}

/// Fraction of predicted pairs whose target lies within `tolerance` of the
/// ground-truth warp of their source point.
pub fn inlier_ratio(predicted: &CorrespondenceSet, warped_source: &[Point3], target: &[Point3], tolerance: f64) -> InlierRatio {
    let total = predicted.len();
    let correct = predicted
        .iter()
        .filter(|c| {
            match (warped_source.get(c.source), target.get(c.target)) {
                (Some(s), Some(t)) => (s - t).norm() <= tolerance,
                _ => false,
            }
        })
        .count();
    InlierRatio {
        ratio: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        empty: total == 0,
    }
}

/// Fraction of ground-truth pairs `(i, j*)` for which some predicted pair
/// from `i` lands within `tolerance` of target point `j*`.
pub fn nfmr(predicted: &CorrespondenceSet, truth: &[(usize, usize)], target: &[Point3], tolerance: f64) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in predicted.iter() {
        by_source.entry(c.source).or_default().push(c.target);
    }
    let recovered = truth
        .iter()
        .filter(|&&(s, t)| {
            let Some(want) = target.get(t) else { return false };
            by_source.get(&s).is_some_and(|js| {
                js.iter()
                    .filter_map(|&j| target.get(j))
                    .any(|p| (p - want).norm() <= tolerance)
            })
        })
        .count();
    Ok(recovered as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2cSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2cStats {
    pub summary: C2cSummary,
    pub bin_width: f64,
    /// `histogram[k]` counts distances in `[k·w, (k+1)·w)`.
    pub histogram: Vec<usize>,
}

fn summarize(d: &[f64]) -> C2cSummary {
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    C2cSummary {
        count: n,
        mean: if n == 0 { 0.0 } else { d.iter().sum::<f64>() / n as f64 },
        median,
        max: sorted.last().copied().unwrap_or(0.0),
    }
}

/// Distance from every source point to its nearest target point.
pub fn c2c_distances(source: &[Point3], target: &[Point3]) -> Result<Vec<f64>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NnIndex::new(target);
    Ok(index.nearest_batch(source)?.into_iter().map(|(_, d)| d).collect())
}

pub fn c2c_stats(source: &[Point3], target: &[Point3], bin_width: f64) -> Result<C2cStats> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let d = c2c_distances(source, target)?;
    Ok(stats_from_distances(&d, bin_width))
}

fn stats_from_distances(d: &[f64], bin_width: f64) -> C2cStats {
    let summary = summarize(d);
    let mut histogram = vec![0usize; (summary.max / bin_width).floor() as usize + 1];
    for &v in d {
        histogram[(v / bin_width).floor() as usize] += 1;
    }
    C2cStats {
        summary,
        bin_width,
        histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_deg: f64,
    /// Displacement between estimate and truth at the part's source centroid.
    pub translation: f64,
    /// `translation` over the part's AABB diagonal.
    pub translation_fraction: f64,
}

pub fn pose_error(estimate: &RigidTransform, truth: &RigidTransform, centroid: &Point3, part_diagonal: f64) -> PoseError {
    let translation = (estimate.apply(centroid) - truth.apply(centroid)).norm();
    PoseError {
        rotation_deg: estimate.rotation_error(truth).to_degrees(),
        translation,
        translation_fraction: if part_diagonal > 0.0 { translation / part_diagonal } else { translation },
    }
}

/// Smallest distance between two parts, before and after registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGap {
    pub parts: (u32, u32),
    pub source_gap: f64,
    pub final_gap: f64,
}

impl JointGap {
    pub fn growth(&self) -> f64 {
        self.final_gap - self.source_gap
    }
}

fn min_gap(points: &[Point3], a: &[usize], b: &[usize]) -> f64 {
    let pa: Vec<Point3> = a.iter().map(|&i| points[i]).collect();
    let index = NnIndex::new(&pa);
    b.iter()
        .filter_map(|&i| index.nearest(&points[i]).ok())
        .map(|(_, d)| d)
        .fold(f64::INFINITY, f64::min)
}

/// Gap of every graph edge in the source model and in the registered cloud.
/// Both clouds share point order.
pub fn joint_gaps(graph: &PartGraph, source: &PointCloud, registered: &PointCloud) -> Result<Vec<JointGap>> {
    if source.len() != registered.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            got: registered.len(),
        });
    }
    Ok(crate::par::map_slice(&graph.edges, |&(a, b)| {
        let ia = &graph.part(a).expect("edge endpoints exist").point_indices;
        let ib = &graph.part(b).expect("edge endpoints exist").point_indices;
        JointGap {
            parts: (a, b),
            source_gap: min_gap(&source.points, ia, ib),
            final_gap: min_gap(&registered.points, ia, ib),
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub tolerance: f64,
    pub inlier_ratio: InlierRatio,
    pub nfmr: f64,
    pub c2c: C2cStats,
    pub per_part_c2c: BTreeMap<u32, C2cSummary>,
    pub pose_errors: BTreeMap<u32, PoseError>,
    pub joint_gaps: Vec<JointGap>,
}

pub struct MetricsInput<'a> {
    /// Labelled source in its own frame.
    pub source: &'a PointCloud,
    pub graph: &'a PartGraph,
    /// Source after registration, same point order as `source`.
    pub registered: &'a PointCloud,
    pub target: &'a PointCloud,
    pub truth: &'a crate::scansim::GroundTruth,
    /// Predicted matches in full-cloud indices.
    pub predicted: &'a CorrespondenceSet,
    /// Estimated total motion per part.
    pub estimates: &'a BTreeMap<u32, RigidTransform>,
    pub tolerance: f64,
    pub bin_width: f64,
}

pub fn compute_bundle(input: &MetricsInput<'_>) -> Result<MetricsBundle> {
    if !(input.bin_width > 0.0) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let labels = input.source.part_ids.as_ref().ok_or(Error::MissingPartLabels)?;
    let warped: Vec<Point3> = input
        .source
        .points
        .iter()
        .zip(labels)
        .map(|(p, l)| input.truth.part_transform(*l).map(|x| x.apply(p)))
        .collect::<Result<_>>()?;
    let inlier_ratio = self::inlier_ratio(input.predicted, &warped, &input.target.points, input.tolerance);
    let nfmr = self::nfmr(input.predicted, &input.truth.correspondences, &input.target.points, input.tolerance)?;
    let d = c2c_distances(&input.registered.points, &input.target.points)?;
    let c2c = stats_from_distances(&d, input.bin_width);
    let mut per_part_c2c = BTreeMap::new();
    let mut pose_errors = BTreeMap::new();
    for part in &input.graph.parts {
        let pd: Vec<f64> = part.point_indices.iter().map(|&i| d[i]).collect();
        per_part_c2c.insert(part.id, summarize(&pd));
        if let (Some(est), Ok(gt)) = (input.estimates.get(&part.id), input.truth.part_transform(part.id)) {
            let centroid = input.source.select(&part.point_indices).centroid().ok_or(Error::EmptyCloud)?;
            pose_errors.insert(part.id, pose_error(est, gt, &centroid, part.aabb.diagonal()));
        }
    }
    Ok(MetricsBundle {
        tolerance: input.tolerance,
        inlier_ratio,
        nfmr,
        c2c,
        per_part_c2c,
        pose_errors,
        joint_gaps: joint_gaps(input.graph, input.source, input.registered)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{oracle_correspondences, Correspondence, OracleScene, OracleSpec};
    use crate::geom::Vec3;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair(s: usize, t: usize) -> Correspondence {
        Correspondence { source: s, target: t, confidence: 1.0 }
    }

    fn line(n: usize, step: f64) -> Vec<Point3> {
        (0..n).map(|i| Point3::new(i as f64 * step, 0.0, 0.0)).collect()
    }

    #[test]
    fn inlier_ratio_examples() {
        let pts = line(10, 1.0);
        let all = CorrespondenceSet::new((0..10).map(|i| pair(i, i)).collect());
        assert_eq!(inlier_ratio(&all, &pts, &pts, 0.1).ratio, 1.0);
        // Four of ten pairs point five units away.
        let mixed = CorrespondenceSet::new((0..10).map(|i| pair(i, if i < 4 { (i + 5) % 10 } else { i })).collect());
        let ir = inlier_ratio(&mixed, &pts, &pts, 0.5);
        assert_eq!((ir.correct, ir.total), (6, 10));
        assert!((ir.ratio - 0.6).abs() < 1e-15);
        let empty = inlier_ratio(&CorrespondenceSet::default(), &pts, &pts, 0.5);
        assert!(empty.empty && empty.ratio == 0.0);
    }

    #[test]
    fn zero_tolerance_counts_exact_matches_only() {
        let pts = line(4, 1.0);
        let mut moved = pts.clone();
        moved[1].x += 1e-9;
        let set = CorrespondenceSet::new((0..4).map(|i| pair(i, i)).collect());
        assert_eq!(inlier_ratio(&set, &pts, &moved, 0.0).correct, 3);
    }

    #[test]
    fn nfmr_examples() {
        let pts = line(10, 1.0);
        let truth: Vec<(usize, usize)> = (0..10).map(|i| (i, i)).collect();
        let exact = CorrespondenceSet::new((0..10).map(|i| pair(i, i)).collect());
        assert_eq!(nfmr(&exact, &truth, &pts, 0.1).unwrap(), 1.0);
        assert_eq!(nfmr(&CorrespondenceSet::default(), &truth, &pts, 0.1).unwrap(), 0.0);
        let half = CorrespondenceSet::new((0..5).map(|i| pair(i, i)).collect());
        assert_eq!(nfmr(&half, &truth, &pts, 0.1).unwrap(), 0.5);
        assert_eq!(nfmr(&half, &[], &pts, 0.1), Err(Error::EmptyGroundTruth));
    }

    #[test]
    fn c2c_identity_and_shift() {
        let pts = line(50, 2.0);
        let s = c2c_stats(&pts, &pts, 0.5).unwrap();
        assert_eq!(s.summary.max, 0.0);
        assert_eq!(s.histogram, vec![50]);
        let shifted: Vec<Point3> = pts.iter().map(|p| p + Vec3::new(0.3, 0.0, 0.0)).collect();
        let s = c2c_stats(&pts, &shifted, 0.5).unwrap();
        assert!((s.summary.mean - 0.3).abs() < 1e-12 && (s.summary.max - 0.3).abs() < 1e-12);
        assert!(c2c_stats(&[], &pts, 1.0).is_err());
    }

    #[test]
    fn c2c_matches_linear_scan() {
        let mut rng = crate::seed::rng(31);
        let mut rand_pts = |n: usize| -> Vec<Point3> {
            (0..n).map(|_| Point3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect()
        };
        let src = rand_pts(1000);
        let tgt = rand_pts(1000);
        let s = c2c_stats(&src, &tgt, 0.1).unwrap();
        let mut d: Vec<f64> = src
            .iter()
            .map(|p| tgt.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .collect();
        let mean = d.iter().sum::<f64>() / 1000.0;
        d.sort_by(f64::total_cmp);
        assert!((s.summary.mean - mean).abs() < 1e-12);
        assert_eq!(s.summary.median, 0.5 * (d[499] + d[500]));
        assert_eq!(s.summary.max, d[999]);
        assert_eq!(s.histogram.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn oracle_inlier_ratio_equals_one_minus_outlier_fraction() {
        let mut rng = crate::seed::rng(5);
        let pts: Vec<Point3> = (0..400)
            .map(|_| Point3::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)))
            .collect();
        let target = PointCloud::new(pts.clone());
        let truth: Vec<(usize, usize)> = (0..400).map(|i| (i, i)).collect();
        let pool: Vec<usize> = (0..400).collect();
        for of in [0.0, 0.25, 0.5] {
            let spec = OracleSpec {
                count: Some(200),
                outlier_fraction: of,
                min_wrong_distance: 1.0,
                seed: 8,
                ..Default::default()
            };
            let scene = OracleScene {
                target: &target,
                truth_pairs: &truth,
                warped_source: &pts,
                source_pool: &pool,
                target_pool: &pool,
            };
            let set = oracle_correspondences(scene, &spec).unwrap();
            assert_eq!(inlier_ratio(&set, &pts, &pts, 0.5).ratio, 1.0 - of);
        }
    }

    proptest! {
        #[test]
        fn adding_pairs_is_monotone(extra in 0usize..10, wrong in 0usize..10) {
            let pts = line(20, 1.0);
            let truth: Vec<(usize, usize)> = (0..20).map(|i| (i, i)).collect();
            let base: Vec<Correspondence> = (0..5).map(|i| pair(i, i)).collect();
            let set = CorrespondenceSet::new(base.clone());
            let ir0 = inlier_ratio(&set, &pts, &pts, 0.1).ratio;
            let nf0 = nfmr(&set, &truth, &pts, 0.1).unwrap();
            let mut good = base.clone();
            good.push(pair(5 + extra, 5 + extra));
            let gs = CorrespondenceSet::new(good);
            prop_assert!(inlier_ratio(&gs, &pts, &pts, 0.1).ratio >= ir0);
            prop_assert!(nfmr(&gs, &truth, &pts, 0.1).unwrap() >= nf0);
            let mut bad = base;
            bad.push(pair(wrong, (wrong + 7) % 20));
            prop_assert!(nfmr(&CorrespondenceSet::new(bad), &truth, &pts, 0.1).unwrap() <= nf0);
        }

        #[test]
        fn summary_ordering(ds in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            let s = summarize(&ds);
            prop_assert!(s.mean >= 0.0 && s.median <= s.max);
            let h = stats_from_distances(&ds, 3.0);
            prop_assert_eq!(h.histogram.iter().sum::<usize>(), ds.len());
        }
    }
}
