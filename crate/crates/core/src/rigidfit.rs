//! Pose estimation: weighted closed-form fitting, RANSAC over matches with
//! junction anchors, and point-to-point ICP.

use nalgebra::Matrix3;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geom::{Point3, RigidTransform, Vec3};
use crate::nn::NnIndex;
use crate::par;

/// Ratio `σ₂ / σ₁` of the cross-covariance below which a fit is degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-12;
pub const DEFAULT_ICP_EPSILON: f64 = 1e-7;
pub const DEFAULT_ICP_ITERATIONS: usize = 50;
pub const DEFAULT_ANCHOR_WEIGHT: f64 = 3.0;
pub const DEFAULT_RANSAC_ITERATIONS: usize = 1000;

/// Closed-form weighted rigid fit of `source → target` pairs.
///
/// Both sides are centred on their weighted centroids, the cross-covariance
/// `H = Σ w (s - s̄)(t - t̄)ᵀ` is decomposed as `UΣVᵀ`, and
/// `R = V diag(1, 1, det(VUᵀ)) Uᵀ`, `t = t̄ - R s̄`.
pub fn weighted_fit(pairs: &[(Point3, Point3, f64)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::TooFewCorrespondences {
            have: pairs.len(),
            need: 3,
        });
    }
    if pairs.iter().any(|p| !(p.2 >= 0.0) || !p.2.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let total: f64 = pairs.iter().map(|p| p.2).sum();
    let uniform = total <= 0.0;
    let weight = |w: f64| if uniform { 1.0 / pairs.len() as f64 } else { w / total };

    let mut s_bar = Vec3::zeros();
    let mut t_bar = Vec3::zeros();
    for (s, t, w) in pairs {
        let w = weight(*w);
        s_bar += s.coords * w;
        t_bar += t.coords * w;
    }
    let mut h = Matrix3::zeros();
    for (s, t, w) in pairs {
        h += (s.coords - s_bar) * (t.coords - t_bar).transpose() * weight(*w);
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] < DEGENERACY_RATIO * sv[0] {
        return Err(Error::DegenerateGeometry(format!(
            "singular values {:e}, {:e}",
            sv[0], sv[1]
        )));
    }
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::DegenerateGeometry("SVD did not converge".into())),
    };
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let t = t_bar - r * s_bar;
    RigidTransform::from_noisy(r, t)
}

/// Inputs of a soft-Procrustes fit: matches plus the point arrays their
/// indices refer to.
#[derive(Debug, Clone, Copy)]
pub struct ProcrustesInput<'a> {
    pub correspondences: &'a CorrespondenceSet,
    pub source: &'a [Point3],
    pub target: &'a [Point3],
    /// Number of highest-confidence matches used.
    pub top_n: usize,
}

/// Confidence-weighted rigid fit over the `top_n` most confident matches.
///
/// Ties in confidence keep the set's order.
pub fn soft_procrustes(input: ProcrustesInput<'_>) -> Result<RigidTransform> {
    if input.top_n < 3 {
        return Err(Error::InvalidArgument("top_n must be at least 3".into()));
    }
    let mut ranked: Vec<_> = input.correspondences.pairs.iter().collect();
    if ranked.len() < 3 {
        return Err(Error::TooFewCorrespondences {
            have: ranked.len(),
            need: 3,
        });
    }
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    ranked.truncate(input.top_n);
    let pairs: Vec<_> = ranked
        .iter()
        .map(|c| (input.source[c.source], input.target[c.target], c.confidence))
        .collect();
    weighted_fit(&pairs)
}

/// Outcome of RANSAC or ICP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub transform: RigidTransform,
    pub inlier_count: usize,
    /// Inlier fraction.
    pub fitness: f64,
    /// Root-mean-square residual over inliers.
    pub rmse: f64,
    /// Inlier indices (into the correspondence set for RANSAC, into the
    /// source points for ICP).
    pub inliers: Vec<usize>,
}

/// A point that has to map onto a fixed location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub source: Point3,
    pub target: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub sample_size: usize,
    pub inlier_distance: f64,
    pub min_correspondences: usize,
    pub seed: u64,
    pub anchors: Vec<AnchorPair>,
    pub anchor_weight: f64,
}

impl RansacConfig {
    pub fn new(inlier_distance: f64, min_correspondences: usize, seed: u64) -> Self {
        Self {
            max_iterations: DEFAULT_RANSAC_ITERATIONS,
            sample_size: 3,
            inlier_distance,
            min_correspondences,
            seed,
            anchors: Vec::new(),
            anchor_weight: DEFAULT_ANCHOR_WEIGHT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_size < 3 {
            return Err(Error::InvalidArgument("sample size must be at least 3".into()));
        }
        if !(self.inlier_distance > 0.0) {
            return Err(Error::InvalidArgument("inlier distance must be positive".into()));
        }
        if self.min_correspondences < self.sample_size {
            return Err(Error::InvalidArgument(
                "min correspondences must be at least the sample size".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max iterations must be positive".into()));
        }
        Ok(())
    }
}

struct Consensus {
    score: f64,
    inliers: Vec<usize>,
    anchor_inliers: usize,
}

fn consensus(
    xf: &RigidTransform,
    src: &[Point3],
    tgt: &[Point3],
    corr: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Consensus {
    let inliers: Vec<usize> = corr
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, c)| (xf.apply(&src[c.source]) - tgt[c.target]).norm() <= cfg.inlier_distance)
        .map(|(k, _)| k)
        .collect();
    let anchor_inliers = cfg
        .anchors
        .iter()
        .filter(|a| (xf.apply(&a.source) - a.target).norm() <= cfg.inlier_distance)
        .count();
    Consensus {
        score: inliers.len() as f64 + cfg.anchor_weight * anchor_inliers as f64,
        inliers,
        anchor_inliers,
    }
}

fn refit(
    inliers: &[usize],
    src: &[Point3],
    tgt: &[Point3],
    corr: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<RigidTransform> {
    let mut pairs: Vec<(Point3, Point3, f64)> = inliers
        .iter()
        .map(|&k| {
            let c = &corr.pairs[k];
            (src[c.source], tgt[c.target], 1.0)
        })
        .collect();
    pairs.extend(cfg.anchors.iter().map(|a| (a.source, a.target, cfg.anchor_weight)));
    weighted_fit(&pairs)
}

/// Seeded hypothesise-and-verify fit over `correspondences`.
///
/// Every iteration draws `sample_size` matches from its own derived seed,
/// so the result does not depend on how iterations are scheduled; the best
/// consensus (ties to the earliest iteration) is re-fitted on all of its
/// inliers plus the anchors.
pub fn ransac_fit(
    src: &[Point3],
    tgt: &[Point3],
    correspondences: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let n = correspondences.len();
    let have = n + cfg.anchors.len();
    if have < cfg.min_correspondences {
        return Err(Error::TooFewCorrespondences {
            have,
            need: cfg.min_correspondences,
        });
    }

    let mut best: Option<Consensus> = None;
    if n >= cfg.sample_size {
        let hypotheses = par::map_range(cfg.max_iterations, |it| {
            let mut rng = crate::seed::rng(crate::seed::derive(cfg.seed, &[it as u64]));
            let sample = index::sample(&mut rng, n, cfg.sample_size);
            let pairs: Vec<_> = sample
                .iter()
                .map(|k| {
                    let c = &correspondences.pairs[k];
                    (src[c.source], tgt[c.target], c.confidence)
                })
                .collect();
            weighted_fit(&pairs)
                .ok()
                .map(|xf| consensus(&xf, src, tgt, correspondences, cfg))
        });
        for h in hypotheses.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| h.score > b.score) {
                best = Some(h);
            }
        }
    } else {
        let all: Vec<usize> = (0..n).collect();
        if let Ok(xf) = refit(&all, src, tgt, correspondences, cfg) {
            best = Some(consensus(&xf, src, tgt, correspondences, cfg));
        }
    }
    let best = best.ok_or(Error::NoConsensus {
        best: 0,
        need: cfg.min_correspondences,
    })?;
    if best.inliers.len() + best.anchor_inliers < cfg.min_correspondences {
        return Err(Error::NoConsensus {
            best: best.inliers.len() + best.anchor_inliers,
            need: cfg.min_correspondences,
        });
    }

    // Local refinement: refit on the consensus set until it stops changing.
    let mut inliers = best.inliers;
    let mut transform = refit(&inliers, src, tgt, correspondences, cfg)?;
    for _ in 0..5 {
        let c = consensus(&transform, src, tgt, correspondences, cfg);
        if c.inliers == inliers || c.inliers.len() + cfg.anchors.len() < 3 {
            break;
        }
        inliers = c.inliers;
        transform = refit(&inliers, src, tgt, correspondences, cfg)?;
    }
    let inliers = consensus(&transform, src, tgt, correspondences, cfg).inliers;
    let sq: f64 = inliers
        .iter()
        .map(|&k| {
            let c = &correspondences.pairs[k];
            (transform.apply(&src[c.source]) - tgt[c.target]).norm_squared()
        })
        .sum();
    Ok(FitResult {
        transform,
        inlier_count: inliers.len(),
        fitness: if n == 0 { 0.0 } else { inliers.len() as f64 / n as f64 },
        rmse: if inliers.is_empty() { 0.0 } else { (sq / inliers.len() as f64).sqrt() },
        inliers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub max_correspondence_distance: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub initial: RigidTransform,
    /// Fixed pairs added to every step and to the objective.
    pub anchors: Vec<AnchorPair>,
    pub anchor_weight: f64,
}

impl IcpConfig {
    pub fn new(max_correspondence_distance: f64) -> Self {
        Self {
            max_correspondence_distance,
            max_iterations: DEFAULT_ICP_ITERATIONS,
            epsilon: DEFAULT_ICP_EPSILON,
            initial: RigidTransform::identity(),
            anchors: Vec::new(),
            anchor_weight: DEFAULT_ANCHOR_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub fit: FitResult,
    /// Truncated RMSE `sqrt(mean(min(d², d_max²)))` at every visited pose,
    /// starting with the initial one, with anchors counted at their weight.
    /// Non-increasing.
    pub history: Vec<f64>,
    pub iterations: usize,
}

struct Pairing {
    objective: f64,
    pairs: Vec<(usize, usize, f64)>,
}

fn pair_up(src: &[Point3], index: &NnIndex, xf: &RigidTransform, cfg: &IcpConfig) -> Pairing {
    let moved: Vec<Point3> = src.iter().map(|p| xf.apply(p)).collect();
    let nn = index.nearest_batch(&moved).expect("non-empty target");
    let dmax = cfg.max_correspondence_distance;
    let cap = dmax * dmax;
    let anchored: f64 = cfg.anchors.iter().map(|a| (xf.apply(&a.source) - a.target).norm_squared()).sum();
    let mut total = cfg.anchor_weight * anchored;
    let mut pairs = Vec::new();
    for (i, (j, d)) in nn.into_iter().enumerate() {
        total += (d * d).min(cap);
        if d <= dmax {
            pairs.push((i, j, d));
        }
    }
    let mass = src.len() as f64 + cfg.anchor_weight * cfg.anchors.len() as f64;
    Pairing {
        objective: (total / mass).sqrt(),
        pairs,
    }
}

/// Point-to-point ICP of `src` onto the points behind `tgt_index`.
///
/// Returns the cumulative transform (including `cfg.initial`).
pub fn icp_fit(src: &[Point3], tgt_index: &NnIndex, cfg: &IcpConfig) -> Result<IcpResult> {
    if src.is_empty() || tgt_index.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let dmax = cfg.max_correspondence_distance;
    if !(dmax > 0.0) || cfg.max_iterations == 0 || !(cfg.anchor_weight >= 0.0) {
        return Err(Error::InvalidArgument(
            "ICP needs a positive distance, at least one iteration and a non-negative anchor weight".into(),
        ));
    }
    let target = tgt_index.points();
    let mut current = cfg.initial;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut pairing = pair_up(src, tgt_index, &current, cfg);
    if pairing.pairs.is_empty() {
        return Err(Error::NoPairsWithinDistance(dmax));
    }
    history.push(pairing.objective);
    while iterations < cfg.max_iterations && pairing.pairs.len() >= 3 {
        let mut step_pairs: Vec<_> = pairing
            .pairs
            .iter()
            .map(|&(i, j, _)| (current.apply(&src[i]), target[j], 1.0))
            .collect();
        step_pairs.extend(cfg.anchors.iter().map(|a| (current.apply(&a.source), a.target, cfg.anchor_weight)));
        let Ok(step) = weighted_fit(&step_pairs) else {
            break;
        };
        let candidate = step.compose(&current);
        let next = pair_up(src, tgt_index, &candidate, cfg);
        // Rounding can make a converged step look marginally worse; keep the old pose then.
        if next.objective > pairing.objective {
            break;
        }
        current = candidate;
        iterations += 1;
        let delta = pairing.objective - next.objective;
        pairing = next;
        history.push(pairing.objective);
        if delta < cfg.epsilon {
            break;
        }
    }
    let sq: f64 = pairing.pairs.iter().map(|p| p.2 * p.2).sum();
    let count = pairing.pairs.len();
    Ok(IcpResult {
        fit: FitResult {
            transform: current,
            inlier_count: count,
            fitness: count as f64 / src.len() as f64,
            rmse: if count == 0 { 0.0 } else { (sq / count as f64).sqrt() },
            inliers: pairing.pairs.iter().map(|p| p.0).collect(),
        },
        history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Correspondence;
    use rand::Rng;

    fn exact_set(n: usize) -> CorrespondenceSet {
        CorrespondenceSet::new(
            (0..n)
                .map(|i| Correspondence {
                    source: i,
                    target: i,
                    confidence: 1.0,
                })
                .collect(),
        )
    }

    fn random_points(rng: &mut impl Rng, n: usize, span: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-span..span),
                    rng.random_range(-span..span),
                    rng.random_range(-span..span),
                )
            })
            .collect()
    }

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        RigidTransform::from_translation(Vec3::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
        ))
        .compose(&RigidTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0)))
    }

    fn cube_corners() -> Vec<Point3> {
        (0..8)
            .map(|k| Point3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64))
            .collect()
    }

    #[test]
    fn self_correspondences_give_identity() {
        let pts = cube_corners();
        let set = exact_set(8);
        let xf = soft_procrustes(ProcrustesInput { correspondences: &set, source: &pts, target: &pts, top_n: 8 }).unwrap();
        assert!((xf.rotation() - Matrix3::identity()).abs().max() < 1e-9);
        assert!(xf.translation().norm() < 1e-9);
    }

    #[test]
    fn recovers_quarter_turn_and_shift_on_cube() {
        let truth = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0))
            .compose(&RigidTransform::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2));
        let src = cube_corners();
        let tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let set = exact_set(8);
        let xf = soft_procrustes(ProcrustesInput { correspondences: &set, source: &src, target: &tgt, top_n: 8 }).unwrap();
        assert!((xf.rotation() - truth.rotation()).abs().max() < 1e-9);
        assert!((xf.translation() - truth.translation()).norm() < 1e-9);
    }

    #[test]
    fn mirrored_target_still_yields_proper_rotation() {
        let mut rng = crate::seed::rng(41);
        let src = random_points(&mut rng, 12, 5.0);
        let tgt: Vec<Point3> = src.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let set = exact_set(12);
        let xf = soft_procrustes(ProcrustesInput { correspondences: &set, source: &src, target: &tgt, top_n: 12 }).unwrap();
        assert!((xf.rotation().determinant() - 1.0).abs() < 1e-9);
        let residual: f64 = src.iter().zip(&tgt).map(|(s, t)| (xf.apply(s) - t).norm()).sum();
        assert!(residual > 1e-3);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let line: Vec<Point3> = (0..5).map(|k| Point3::new(k as f64, 0.0, 0.0)).collect();
        let set = exact_set(5);
        let err = soft_procrustes(ProcrustesInput { correspondences: &set, source: &line, target: &line, top_n: 5 }).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
        let two = exact_set(2);
        assert!(matches!(
            soft_procrustes(ProcrustesInput { correspondences: &two, source: &line, target: &line, top_n: 5 }),
            Err(Error::TooFewCorrespondences { .. })
        ));
    }

    #[test]
    fn top_n_drops_low_confidence_outliers() {
        let mut rng = crate::seed::rng(42);
        let src = random_points(&mut rng, 20, 5.0);
        let truth = random_transform(&mut rng);
        let mut tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let mut set = exact_set(20);
        for k in 15..20 {
            tgt[k] = Point3::new(100.0, 100.0, 100.0);
            set.pairs[k].confidence = 0.1;
        }
        let xf = soft_procrustes(ProcrustesInput { correspondences: &set, source: &src, target: &tgt, top_n: 15 }).unwrap();
        assert!(xf.rotation_error(&truth) < 1e-9);
    }

    #[test]
    fn procrustes_is_rotation_equivariant() {
        let mut rng = crate::seed::rng(43);
        for _ in 0..20 {
            let src = random_points(&mut rng, 10, 5.0);
            let tgt: Vec<Point3> = random_points(&mut rng, 10, 5.0);
            let q = RigidTransform::from_axis_angle(
                &Vec3::new(rng.random_range(-1.0..1.0), 1.0, 0.3),
                rng.random_range(-3.0..3.0),
            );
            let set = exact_set(10);
            let base = soft_procrustes(ProcrustesInput { correspondences: &set, source: &src, target: &tgt, top_n: 10 }).unwrap();
            let s2: Vec<Point3> = src.iter().map(|p| q.apply(p)).collect();
            let t2: Vec<Point3> = tgt.iter().map(|p| q.apply(p)).collect();
            let rot = soft_procrustes(ProcrustesInput { correspondences: &set, source: &s2, target: &t2, top_n: 10 }).unwrap();
            let expect = q.rotation() * base.rotation() * q.rotation().transpose();
            assert!((rot.rotation() - expect).abs().max() < 1e-8);
        }
    }

    #[test]
    fn ransac_on_exact_matches_equals_direct_fit() {
        let mut rng = crate::seed::rng(44);
        let src = random_points(&mut rng, 60, 10.0);
        let truth = random_transform(&mut rng);
        let tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p) + Vec3::new(rng.random_range(-0.01..0.01), 0.0, 0.0)).collect();
        let set = exact_set(60);
        let direct = soft_procrustes(ProcrustesInput { correspondences: &set, source: &src, target: &tgt, top_n: 60 }).unwrap();
        let fit = ransac_fit(&src, &tgt, &set, &RansacConfig::new(1.0, 5, 3)).unwrap();
        assert_eq!(fit.inlier_count, 60);
        assert!((fit.transform.rotation() - direct.rotation()).abs().max() < 1e-6);
        assert!((fit.transform.translation() - direct.translation()).norm() < 1e-6);
    }

    #[test]
    fn ransac_survives_half_outliers_and_is_deterministic() {
        let mut rng = crate::seed::rng(45);
        let src = random_points(&mut rng, 200, 10.0);
        let truth = random_transform(&mut rng);
        let mut tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let mut set = exact_set(200);
        for k in 0..100 {
            tgt.push(Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), 0.0));
            set.pairs[k].target = tgt.len() - 1;
        }
        let cfg = RansacConfig::new(0.5, 5, 11);
        let fit = ransac_fit(&src, &tgt, &set, &cfg).unwrap();
        assert!(fit.transform.rotation_error(&truth).to_degrees() < 0.5);
        assert!((fit.transform.translation() - truth.translation()).norm() < 0.01);
        for &k in &fit.inliers {
            let c = set.pairs[k];
            assert!((fit.transform.apply(&src[c.source]) - tgt[c.target]).norm() <= cfg.inlier_distance);
        }
        assert_eq!(ransac_fit(&src, &tgt, &set, &cfg).unwrap(), fit);
    }

    #[test]
    fn ransac_error_paths() {
        let pts = cube_corners();
        let set = exact_set(4);
        assert_eq!(
            ransac_fit(&pts, &pts, &set, &RansacConfig::new(0.1, 5, 0)),
            Err(Error::TooFewCorrespondences { have: 4, need: 5 })
        );
        // Anchors count toward the minimum.
        let mut cfg = RansacConfig::new(0.1, 5, 0);
        cfg.anchors = vec![AnchorPair { source: pts[5], target: pts[5] }];
        assert!(ransac_fit(&pts, &pts, &set, &cfg).is_ok());
    }

    #[test]
    fn anchors_pull_the_final_fit() {
        let mut rng = crate::seed::rng(46);
        let src = random_points(&mut rng, 30, 5.0);
        let truth = RigidTransform::from_translation(Vec3::new(0.3, 0.0, 0.0));
        let tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let set = exact_set(30);
        let mut cfg = RansacConfig::new(1.0, 5, 1);
        let free = ransac_fit(&src, &tgt, &set, &cfg).unwrap();
        cfg.anchors = (0..10).map(|k| AnchorPair { source: src[k], target: src[k] }).collect();
        let held = ransac_fit(&src, &tgt, &set, &cfg).unwrap();
        assert!(held.transform.translation().norm() < free.transform.translation().norm());
    }

    fn grid_surface(n: usize) -> Vec<Point3> {
        // Wavy sheet: rich enough to constrain all six degrees of freedom.
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = i as f64;
                let y = j as f64;
                pts.push(Point3::new(x, y, 2.0 * (x * 0.4).sin() + 1.5 * (y * 0.3).cos()));
            }
        }
        pts
    }

    #[test]
    fn icp_identity_on_identical_clouds() {
        let pts = grid_surface(15);
        let index = NnIndex::new(&pts);
        let r = icp_fit(&pts, &index, &IcpConfig::new(2.0)).unwrap();
        assert!(r.fit.rmse < 1e-12);
        assert!(r.fit.transform.angle() < 1e-9);
        assert!(r.fit.transform.translation().norm() < 1e-9);
    }

    #[test]
    fn icp_recovers_small_motion() {
        let src = grid_surface(25);
        let diag = crate::geom::aabb_of(&crate::geom::PointCloud::new(src.clone()), None).unwrap().diagonal();
        let truth = RigidTransform::from_translation(Vec3::new(0.02 * diag / 3f64.sqrt(), 0.02 * diag / 3f64.sqrt(), 0.02 * diag / 3f64.sqrt()))
            .compose(&RigidTransform::about_line(&Point3::new(12.0, 12.0, 0.0), &Vec3::new(0.2, 0.3, 1.0), 5f64.to_radians()));
        let tgt: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let index = NnIndex::new(&tgt);
        let r = icp_fit(&src, &index, &IcpConfig { max_iterations: 200, epsilon: 1e-12, ..IcpConfig::new(5.0) }).unwrap();
        assert!(r.fit.transform.rotation_error(&truth).to_degrees() < 0.2);
        let centroid = Point3::new(12.0, 12.0, 0.0);
        assert!((r.fit.transform.apply(&centroid) - truth.apply(&centroid)).norm() < 0.005 * diag);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn icp_anchors_hold_the_fit_back() {
        let src = grid_surface(15);
        let shift = RigidTransform::from_translation(Vec3::new(0.3, 0.0, 0.0));
        let tgt: Vec<Point3> = src.iter().map(|p| shift.apply(p)).collect();
        let index = NnIndex::new(&tgt);
        let free = icp_fit(&src, &index, &IcpConfig::new(2.0)).unwrap();
        let cfg = IcpConfig {
            anchors: (0..10).map(|k| AnchorPair { source: src[k], target: src[k] }).collect(),
            ..IcpConfig::new(2.0)
        };
        let held = icp_fit(&src, &index, &cfg).unwrap();
        assert!(held.fit.transform.translation().norm() < free.fit.transform.translation().norm());
        assert!(held.history.len() > 1);
        for w in held.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn icp_no_pairs() {
        let pts = grid_surface(5);
        let far: Vec<Point3> = pts.iter().map(|p| p + Vec3::new(100.0, 0.0, 0.0)).collect();
        let index = NnIndex::new(&far);
        assert_eq!(
            icp_fit(&pts, &index, &IcpConfig::new(1.0)).unwrap_err(),
            Error::NoPairsWithinDistance(1.0)
        );
    }
}
