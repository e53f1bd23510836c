//! Geometric primitives shared by every stage: points, clouds, rigid
//! transforms and axis-aligned boxes.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tolerance for accepting a matrix as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ordered points with optional per-point part labels and feature vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub part_ids: Option<Vec<u32>>,
    pub features: Option<Vec<Vec<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            part_ids: None,
            features: None,
        }
    }

    pub fn with_part_ids(points: Vec<Point3>, part_ids: Vec<u32>) -> Result<Self> {
        if part_ids.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: part_ids.len(),
            });
        }
        Ok(Self {
            points,
            part_ids: Some(part_ids),
            features: None,
        })
    }

    pub fn set_features(&mut self, features: Vec<Vec<f64>>) -> Result<()> {
        if features.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: features.len(),
            });
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
            }
            if let Some(bad) = features.iter().find(|f| f.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.len(),
                });
            }
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn part_id(&self, i: usize) -> Option<u32> {
        self.part_ids.as_ref().map(|ids| ids[i])
    }

    /// Indices of the points labelled with `part`.
    pub fn indices_of_part(&self, part: u32) -> Vec<usize> {
        match &self.part_ids {
            Some(ids) => ids
                .iter()
                .enumerate()
                .filter(|(_, &p)| p == part)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    /// A new cloud holding the selected points (labels and features follow).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            part_ids: self
                .part_ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i]).collect()),
            features: self
                .features
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i].clone()).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vec3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

/// A proper rigid motion `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "MatrixRows", try_from = "MatrixRows")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

/// Row-major 4x4 homogeneous matrix, the on-disk form of a transform.
pub type MatrixRows = [[f64; 4]; 4];

impl From<RigidTransform> for MatrixRows {
    fn from(xf: RigidTransform) -> Self {
        xf.to_rows()
    }
}

impl TryFrom<MatrixRows> for RigidTransform {
    type Error = Error;

    fn try_from(rows: MatrixRows) -> Result<Self> {
        RigidTransform::from_rows(&rows)
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform, rejecting matrices that are not proper rotations
    /// within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a transform from a nearly-orthonormal matrix by projecting it
    /// onto SO(3) (closest rotation in Frobenius norm).
    pub fn from_noisy(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let projected = project_to_rotation(&rotation)?;
        Self::new(projected, translation)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about `axis` through the origin.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation: Vec3::zeros(),
        }
    }

    /// Rotation by `angle` radians about the line through `pivot` along `axis`.
    pub fn about_line(pivot: &Point3, axis: &Vec3, angle: f64) -> Self {
        let r = Self::from_axis_angle(axis, angle);
        let t = pivot.coords - r.rotation * pivot.coords;
        Self {
            rotation: r.rotation,
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in [0, π].
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Angle of `self⁻¹ ∘ other`'s rotation, i.e. the rotation error between two poses.
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        self.inverse().compose(other).angle()
    }

    pub fn to_rows(&self) -> MatrixRows {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_rows(rows: &MatrixRows) -> Result<Self> {
        if rows[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidRotation("last row must be 0 0 0 1".into()));
        }
        let rotation = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        Self::new(rotation, Vec3::new(rows[0][3], rows[1][3], rows[2][3]))
    }
}

fn check_rotation(m: &Matrix3<f64>) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidRotation("non-finite entries".into()));
    }
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    if ortho > ROTATION_TOLERANCE {
        return Err(Error::InvalidRotation(format!(
            "RᵀR deviates from identity by {ortho:e}"
        )));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidRotation(format!("determinant {det}")));
    }
    Ok(())
}

/// Closest proper rotation to `m` via SVD.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::InvalidRotation("SVD failed".into())),
    };
    let d = (u * vt).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * vt)
}

/// Applies `xf` to every point; labels and features are carried through.
pub fn apply_transform(cloud: &PointCloud, xf: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| xf.apply(p)).collect(),
        part_ids: cloud.part_ids.clone(),
        features: cloud.features.clone(),
    }
}

/// Multiplies every coordinate by `factor`.
pub fn scale_cloud(cloud: &PointCloud, factor: f64) -> Result<PointCloud> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::NonPositiveFactor(factor));
    }
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| p * factor).collect(),
        part_ids: cloud.part_ids.clone(),
        features: cloud.features.clone(),
    })
}

/// Axis-aligned bounding box with closed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_point(p: &Point3) -> Self {
        Self { min: *p, max: *p }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self::from_point(first);
        for p in it {
            b.grow(p);
        }
        Some(b)
    }

    pub fn grow(&mut self, p: &Point3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    /// Grows each side by `amount` model units.
    pub fn inflated(&self, amount: f64) -> Aabb {
        let d = Vec3::repeat(amount);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }
}

/// Componentwise bound of the selected points (all points when `subset` is `None`).
pub fn aabb_of(cloud: &PointCloud, subset: Option<&[usize]>) -> Result<Aabb> {
    let bound = match subset {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= cloud.len()) {
                return Err(Error::InvalidArgument(format!(
                    "index {bad} out of range for {} points",
                    cloud.len()
                )));
            }
            Aabb::from_points(idx.iter().map(|&i| &cloud.points[i]))
        }
        None => Aabb::from_points(cloud.points.iter()),
    };
    bound.ok_or(Error::EmptySelection)
}
