//! Correspondence back-ends. Both return pairs in full-cloud indices.

use super::config::{DescriptorSettings, OracleSettings};
use crate::error::{Error, Result};
use crate::features::{
    dual_softmax, extract_matches, kernel_descriptor, oracle_correspondences, score_matrix, subsample,
    CorrespondenceSet, EncodedSide, KernelConfig, OracleScene, OracleSpec, RotaryEncoder,
};
use crate::geom::{Point3, PointCloud};
use crate::nn::median_spacing;
use crate::scansim::GroundTruth;
use crate::seed;

pub struct OracleRequest<'a> {
    pub source: &'a PointCloud,
    pub target: &'a PointCloud,
    pub truth: &'a GroundTruth,
    pub source_kept: &'a [usize],
    pub target_kept: &'a [usize],
    pub settings: OracleSettings,
    pub theta_c: f64,
    /// Wrong pairs are pushed at least this far from the true position.
    pub wrong_distance: f64,
    pub seed: u64,
}

/// Ground-truth pairs whose endpoints both survived subsampling, mixed with
/// wrong pairs at the configured outlier fraction.
pub fn oracle_matches(req: &OracleRequest<'_>) -> Result<CorrespondenceSet> {
    let labels = req.source.part_ids.as_ref().ok_or(Error::MissingPartLabels)?;
    let warped: Vec<Point3> = req
        .source
        .points
        .iter()
        .zip(labels)
        .map(|(p, l)| req.truth.part_transform(*l).map(|x| x.apply(p)))
        .collect::<Result<_>>()?;
    let mut src_mask = vec![false; req.source.len()];
    req.source_kept.iter().for_each(|&i| src_mask[i] = true);
    let mut tgt_mask = vec![false; req.target.len()];
    req.target_kept.iter().for_each(|&j| tgt_mask[j] = true);
    let truth_pairs: Vec<(usize, usize)> = req
        .truth
        .correspondences
        .iter()
        .copied()
        .filter(|&(s, t)| src_mask.get(s) == Some(&true) && tgt_mask.get(t) == Some(&true))
        .collect();
    let spec = OracleSpec {
        count: None,
        outlier_fraction: req.settings.outlier_fraction,
        position_sigma: req.settings.position_sigma,
        theta_c: req.theta_c,
        min_wrong_distance: req.wrong_distance,
        seed: req.seed,
    };
    oracle_correspondences(
        OracleScene {
            target: req.target,
            truth_pairs: &truth_pairs,
            warped_source: &warped,
            source_pool: req.source_kept,
            target_pool: req.target_kept,
        },
        &spec,
    )
}

fn cap(cloud: &PointCloud, kept: &[usize], max_points: usize, seed: u64) -> Result<Vec<usize>> {
    if kept.len() <= max_points {
        return Ok(kept.to_vec());
    }
    let sub = PointCloud::new(kept.iter().map(|&i| cloud.points[i]).collect());
    let (_, idx) = subsample(&sub, max_points as f64 / kept.len() as f64, seed)?;
    Ok(idx.into_iter().map(|k| kept[k]).collect())
}

/// Frozen kernel descriptors on both subsampled clouds, rotary-encoded
/// scores, dual-softmax confidences and thresholding at `theta_c`.
pub fn descriptor_matches(
    source: &PointCloud,
    target: &PointCloud,
    source_kept: &[usize],
    target_kept: &[usize],
    settings: &DescriptorSettings,
    theta_c: f64,
    seed_value: u64,
) -> Result<CorrespondenceSet> {
    let src_idx = cap(source, source_kept, settings.max_points, seed::derive(seed_value, &[1]))?;
    let tgt_idx = cap(target, target_kept, settings.max_points, seed::derive(seed_value, &[2]))?;
    let src = PointCloud::new(src_idx.iter().map(|&i| source.points[i]).collect());
    let tgt = PointCloud::new(tgt_idx.iter().map(|&j| target.points[j]).collect());
    let spacing = median_spacing(&tgt.points)
        .or_else(|| median_spacing(&src.points))
        .ok_or(Error::EmptyCloud)?;
    let kernel = KernelConfig::new(settings.radius_spacings * spacing.max(f64::EPSILON), settings.dim, seed::derive(seed_value, &[3]))?;
    let fs = kernel_descriptor(&src, &kernel);
    let ft = kernel_descriptor(&tgt, &kernel);
    let enc = RotaryEncoder::new(settings.dim, settings.rotary_base)?;
    let scores = score_matrix(
        EncodedSide { positions: &src.points, features: &fs },
        EncodedSide { positions: &tgt.points, features: &ft },
        &enc,
    )?;
    let conf = dual_softmax(&scores);
    Ok(extract_matches(&conf, theta_c).remap(&src_idx, &tgt_idx))
}
