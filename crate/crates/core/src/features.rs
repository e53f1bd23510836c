//! Correspondence front-end without learned weights.
//!
//! The descriptor path is: uniform subsampling, kernel-point correlation
//! descriptors with frozen seeded weights, rotary positional encoding, a
//! scaled inner-product score matrix, dual-softmax confidences and a
//! threshold. The oracle path draws matches from simulator ground truth and
//! is what the pipeline uses when the scene geometry defeats the descriptor
//! (it is not rotation invariant).

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, RigidTransform, Vec3};
use crate::nn::NnIndex;
use crate::par;

pub const DEFAULT_THETA_C: f64 = 0.05;
pub const DEFAULT_ROTARY_BASE: f64 = 10_000.0;
pub const DEFAULT_FEATURE_DIM: usize = 48;
pub const KERNEL_POINT_COUNT: usize = 15;

/// Keeps `round(retention * n)` points chosen uniformly without replacement.
///
/// Returns the subsampled cloud and, for each kept point, its index in the
/// input. Kept points stay in input order.
pub fn subsample(cloud: &PointCloud, retention: f64, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "retention must lie in (0, 1], got {retention}"
        )));
    }
    let n = cloud.len();
    let keep = (retention * n as f64).round() as usize;
    if keep == 0 {
        return Err(Error::EmptyResult);
    }
    let kept: Vec<usize> = if keep >= n {
        (0..n).collect()
    } else {
        let mut rng = crate::seed::rng(seed);
        let mut idx = index::sample(&mut rng, n, keep).into_vec();
        idx.sort_unstable();
        idx
    };
    Ok((cloud.select(&kept), kept))
}

/// Frozen kernel-point convolution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub kernel_points: Vec<Vec3>,
    pub radius: f64,
    pub sigma: f64,
    /// `K × D` matrix; row `k` is the frozen weight of kernel point `k`.
    pub weight_matrix: DMatrix<f64>,
    pub seed: u64,
}

impl KernelConfig {
    /// One kernel point at the origin plus a randomly rotated Fibonacci shell
    /// at `0.66 r`, influence width `r / 3`, Gaussian weights.
    pub fn new(radius: f64, dim: usize, seed: u64) -> Result<Self> {
        if !(radius > 0.0) || dim == 0 {
            return Err(Error::InvalidArgument(
                "kernel radius must be positive and dimension >= 1".into(),
            ));
        }
        let mut rng = crate::seed::rng(seed);
        let shell = KERNEL_POINT_COUNT - 1;
        let spin = random_rotation(&mut rng);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut kernel_points = vec![Vec3::zeros()];
        for k in 0..shell {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / shell as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            let dir = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
            kernel_points.push(spin.apply_vector(&dir) * (0.66 * radius));
        }
        let weight_matrix =
            DMatrix::from_fn(KERNEL_POINT_COUNT, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(Self {
            kernel_points,
            radius,
            sigma: radius / 3.0,
            weight_matrix,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.weight_matrix.ncols()
    }

    /// Linear correlation between offset `y` and kernel point `k`.
    pub fn correlation(&self, y: &Vec3, k: usize) -> f64 {
        (1.0 - (y - self.kernel_points[k]).norm() / self.sigma).max(0.0)
    }
}

fn random_rotation(rng: &mut impl Rng) -> RigidTransform {
    let axis = Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let axis = if axis.norm() < 1e-12 { Vec3::z() } else { axis };
    RigidTransform::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI))
}

/// Unit-length descriptor per point; zero vector when a point has no other
/// point within the kernel radius.
pub fn kernel_descriptor(cloud: &PointCloud, cfg: &KernelConfig) -> Vec<Vec<f64>> {
    let index = NnIndex::from_cloud(cloud);
    par::map_range(cloud.len(), |i| {
        let x = cloud.points[i];
        let mut activation = vec![0.0; cfg.kernel_points.len()];
        for j in index.within_radius(&x, cfg.radius) {
            if j == i {
                continue;
            }
            let y = cloud.points[j] - x;
            for (k, a) in activation.iter_mut().enumerate() {
                *a += cfg.correlation(&y, k);
            }
        }
        let mut feature = vec![0.0; cfg.dim()];
        for (k, a) in activation.iter().enumerate() {
            if *a != 0.0 {
                for (d, f) in feature.iter_mut().enumerate() {
                    *f += a * cfg.weight_matrix[(k, d)];
                }
            }
        }
        let norm = feature.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            feature.iter_mut().for_each(|v| *v /= norm);
        }
        feature
    })
}

/// Block-diagonal rotary encoding over three axes.
///
/// The feature is split into three equal slabs, one per coordinate axis;
/// each slab is a ladder of 2×2 rotations with frequencies
/// `base^(-6j/D)`, `j = 0..D/6`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotaryEncoder {
    dim: usize,
    base: f64,
    frequencies: Vec<f64>,
}

impl RotaryEncoder {
    pub fn new(dim: usize, base: f64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(6) {
            return Err(Error::InvalidArgument(format!(
                "rotary dimension must be a positive multiple of 6, got {dim}"
            )));
        }
        if !(base > 0.0) {
            return Err(Error::InvalidArgument("rotary base must be positive".into()));
        }
        let blocks = dim / 6;
        let frequencies = (0..blocks)
            .map(|j| base.powf(-(6.0 * j as f64) / dim as f64))
            .collect();
        Ok(Self {
            dim,
            base,
            frequencies,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `Θ(position) · feature`.
    pub fn encode(&self, position: &Point3, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: feature.len(),
            });
        }
        let mut out = feature.to_vec();
        let slab = self.dim / 3;
        for axis in 0..3 {
            for (j, w) in self.frequencies.iter().enumerate() {
                let (s, c) = (position[axis] * w).sin_cos();
                let a = axis * slab + 2 * j;
                let (x0, x1) = (feature[a], feature[a + 1]);
                out[a] = c * x0 - s * x1;
                out[a + 1] = s * x0 + c * x1;
            }
        }
        Ok(out)
    }

    /// Dense `Θ(position)`, for inspection and tests.
    pub fn matrix(&self, position: &Point3) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let slab = self.dim / 3;
        for axis in 0..3 {
            for (j, w) in self.frequencies.iter().enumerate() {
                let (s, c) = (position[axis] * w).sin_cos();
                let a = axis * slab + 2 * j;
                m[(a, a)] = c;
                m[(a, a + 1)] = -s;
                m[(a + 1, a)] = s;
                m[(a + 1, a + 1)] = c;
            }
        }
        m
    }
}

/// Dense row-major real matrix used for scores and confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub type ScoreMatrix = DenseMatrix;
pub type ConfidenceMatrix = DenseMatrix;

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Positions and (un-encoded) features of one side of the matching problem.
#[derive(Debug, Clone, Copy)]
pub struct EncodedSide<'a> {
    pub positions: &'a [Point3],
    pub features: &'a [Vec<f64>],
}

/// `S(i,j) = ⟨Θ(p_i) x_i, Θ(q_j) y_j⟩ / √D`.
pub fn score_matrix(src: EncodedSide<'_>, tgt: EncodedSide<'_>, enc: &RotaryEncoder) -> Result<ScoreMatrix> {
    let encode_side = |side: EncodedSide<'_>| -> Result<Vec<Vec<f64>>> {
        if side.positions.len() != side.features.len() {
            return Err(Error::DimensionMismatch {
                expected: side.positions.len(),
                got: side.features.len(),
            });
        }
        side.positions
            .iter()
            .zip(side.features)
            .map(|(p, f)| enc.encode(p, f))
            .collect()
    };
    let a = encode_side(src)?;
    let b = encode_side(tgt)?;
    let scale = 1.0 / (enc.dim() as f64).sqrt();
    let rows = par::map_slice(&a, |x| {
        b.iter()
            .map(|y| scale * x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    Ok(DenseMatrix {
        rows: a.len(),
        cols: b.len(),
        data: rows.concat(),
    })
}

/// `C(i,j) = softmax_row(i)[j] · softmax_col(j)[i]`.
pub fn dual_softmax(scores: &ScoreMatrix) -> ConfidenceMatrix {
    let (n, m) = (scores.rows, scores.cols);
    let row_soft: Vec<Vec<f64>> = par::map_range(n, |i| softmax(scores.row(i)));
    let col_soft: Vec<Vec<f64>> = par::map_range(m, |j| {
        let col: Vec<f64> = (0..n).map(|i| scores.get(i, j)).collect();
        softmax(&col)
    });
    let mut data = Vec::with_capacity(n * m);
    for (i, row) in row_soft.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            data.push(r * col_soft[j][i]);
        }
    }
    DenseMatrix {
        rows: n,
        cols: m,
        data,
    }
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Correspondence> {
        self.pairs.iter()
    }

    /// Rewrites indices through `source_map` / `target_map` (e.g. from
    /// subsampled to full-cloud indices).
    pub fn remap(&self, source_map: &[usize], target_map: &[usize]) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|c| Correspondence {
                    source: source_map[c.source],
                    target: target_map[c.target],
                    confidence: c.confidence,
                })
                .collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&Correspondence) -> bool) -> Self {
        Self {
            pairs: self.pairs.iter().copied().filter(|c| keep(c)).collect(),
        }
    }
}

/// Every entry with confidence at least `theta_c`, in row-major order.
pub fn extract_matches(conf: &ConfidenceMatrix, theta_c: f64) -> CorrespondenceSet {
    let mut pairs = Vec::new();
    for i in 0..conf.rows {
        for (j, &c) in conf.row(i).iter().enumerate() {
            if c >= theta_c {
                pairs.push(Correspondence {
                    source: i,
                    target: j,
                    confidence: c,
                });
            }
        }
    }
    CorrespondenceSet { pairs }
}

/// Parameters of the ground-truth match generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Pairs to emit; `None` uses every available ground-truth pair.
    pub count: Option<usize>,
    pub outlier_fraction: f64,
    /// Gaussian jitter applied to the true target position before snapping
    /// to the nearest target point.
    pub position_sigma: f64,
    pub theta_c: f64,
    /// Wrong pairs land at least this far from the true target position.
    pub min_wrong_distance: f64,
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            count: None,
            outlier_fraction: 0.0,
            position_sigma: 0.0,
            theta_c: DEFAULT_THETA_C,
            min_wrong_distance: 0.0,
            seed: 0,
        }
    }
}

/// Ground truth as seen by the oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleScene<'a> {
    pub target: &'a PointCloud,
    /// True `(source, target)` pairs eligible for emission.
    pub truth_pairs: &'a [(usize, usize)],
    /// Ground-truth position of every source point in the target frame.
    pub warped_source: &'a [Point3],
    /// Source indices wrong pairs may start from.
    pub source_pool: &'a [usize],
    /// Target indices pairs may land on.
    pub target_pool: &'a [usize],
}

/// Emits `(1 - outlier_fraction)` true pairs with confidence 1 and the rest
/// as uniformly drawn wrong pairs with confidence in `[theta_c, 1]`, shuffled.
pub fn oracle_correspondences(scene: OracleScene<'_>, spec: &OracleSpec) -> Result<CorrespondenceSet> {
    if !(0.0..=1.0).contains(&spec.outlier_fraction) {
        return Err(Error::InvalidArgument("outlier fraction must lie in [0, 1]".into()));
    }
    let total = spec.count.unwrap_or(scene.truth_pairs.len());
    let n_wrong = (spec.outlier_fraction * total as f64).round() as usize;
    let n_true = (total - n_wrong).min(scene.truth_pairs.len());
    let mut rng = crate::seed::rng(spec.seed);
    let mut pairs = Vec::with_capacity(n_true + n_wrong);

    let pool_points: Vec<Point3> = scene.target_pool.iter().map(|&j| scene.target.points[j]).collect();
    let pool_index = NnIndex::new(&pool_points);
    let jitter = Normal::new(0.0, spec.position_sigma.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for k in index::sample(&mut rng, scene.truth_pairs.len(), n_true) {
        let (s, t) = scene.truth_pairs[k];
        let target = if spec.position_sigma > 0.0 && !pool_points.is_empty() {
            let p = scene.target.points[t]
                + Vec3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng));
            scene.target_pool[pool_index.nearest(&p)?.0]
        } else {
            t
        };
        pairs.push(Correspondence {
            source: s,
            target,
            confidence: 1.0,
        });
    }
    if n_wrong > 0 && (scene.source_pool.is_empty() || scene.target_pool.is_empty()) {
        return Err(Error::InvalidArgument("empty pool for wrong pairs".into()));
    }
    for _ in 0..n_wrong {
        let s = scene.source_pool[rng.random_range(0..scene.source_pool.len())];
        let truth = scene.warped_source[s];
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..64 {
            let t = scene.target_pool[rng.random_range(0..scene.target_pool.len())];
            let d = (scene.target.points[t] - truth).norm();
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, t));
            }
            if d > spec.min_wrong_distance {
                break;
            }
        }
        let (_, t) = best.expect("at least one draw");
        let confidence = if spec.theta_c < 1.0 {
            rng.random_range(spec.theta_c..=1.0)
        } else {
            1.0
        };
        pairs.push(Correspondence {
            source: s,
            target: t,
            confidence,
        });
    }
    pairs.shuffle(&mut rng);
    Ok(CorrespondenceSet { pairs })
}
