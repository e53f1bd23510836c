use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::models::ArticulatedModel;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, RigidTransform};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationSpec {
    pub whole_body: RigidTransform,
    /// Hinge angle in degrees per movable part.
    #[serde(default)]
    pub hinge_angles_deg: BTreeMap<u32, f64>,
    /// Extra motion applied after the hinge rotation, in the model frame.
    #[serde(default)]
    pub offsets: BTreeMap<u32, RigidTransform>,
}

impl DeformationSpec {
    pub fn with_pose(whole_body: RigidTransform) -> Self {
        DeformationSpec {
            whole_body,
            ..Default::default()
        }
    }

    pub fn hinge(mut self, part: u32, degrees: f64) -> Self {
        self.hinge_angles_deg.insert(part, degrees);
        self
    }

    /// Parts carrying a nonzero hinge angle or offset.
    pub fn deformed_parts(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .hinge_angles_deg
            .iter()
            .filter(|(_, a)| **a != 0.0)
            .map(|(p, _)| *p)
            .chain(
                self.offsets
                    .iter()
                    .filter(|(_, o)| **o != RigidTransform::identity())
                    .map(|(p, _)| *p),
            )
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub whole_body: RigidTransform,
    /// Full motion of each part from the source frame into the target frame.
    pub part_transforms: BTreeMap<u32, RigidTransform>,
    /// `(source index, target index)` pairs, sorted by target index.
    pub correspondences: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn part_transform(&self, part: u32) -> Result<&RigidTransform> {
        self.part_transforms.get(&part).ok_or(Error::UnknownPart(part))
    }

    /// Source preimage of every target point, `None` for unmatched points.
    pub fn preimages(&self, target_len: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; target_len];
        for &(s, t) in &self.correspondences {
            if t < target_len {
                out[t] = Some(s);
            }
        }
        out
    }
}

/// Poses the model: hinge rotations propagate from parents to children, then
/// the whole-body pose is applied. Point order and labels are preserved.
pub fn apply_deformation(model: &ArticulatedModel, spec: &DeformationSpec) -> Result<(PointCloud, GroundTruth)> {
    for &p in spec.hinge_angles_deg.keys().chain(spec.offsets.keys()) {
        if model.hinge(p).is_none() {
            return Err(Error::NotMovable(p));
        }
    }
    let mut world: BTreeMap<u32, RigidTransform> = BTreeMap::new();
    for part in model.kinematic_order() {
        let motion = match model.hinge(part) {
            None => RigidTransform::identity(),
            Some(h) => {
                let angle = spec.hinge_angles_deg.get(&part).copied().unwrap_or(0.0).to_radians();
                let local = RigidTransform::about_line(&h.pivot, &h.axis, angle);
                let local = match spec.offsets.get(&part) {
                    Some(o) => o.compose(&local),
                    None => local,
                };
                let parent = world.get(&h.parent).copied().unwrap_or_default();
                parent.compose(&local)
            }
        };
        world.insert(part, motion);
    }
    let part_transforms: BTreeMap<u32, RigidTransform> = world
        .into_iter()
        .map(|(p, m)| (p, spec.whole_body.compose(&m)))
        .collect();
    let labels = model.cloud.part_ids.as_ref().ok_or(Error::MissingPartLabels)?;
    let points = model
        .cloud
        .points
        .iter()
        .zip(labels)
        .map(|(p, l)| part_transforms.get(l).map(|x| x.apply(p)).ok_or(Error::UnknownPart(*l)))
        .collect::<Result<Vec<_>>>()?;
    let cloud = PointCloud::with_part_ids(points, labels.clone())?;
    let correspondences = (0..cloud.len()).map(|i| (i, i)).collect();
    Ok((
        cloud,
        GroundTruth {
            whole_body: spec.whole_body,
            part_transforms,
            correspondences,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Vec3};
    use crate::scansim::{build_lander_like, build_robot_like};
    use proptest::prelude::*;

    /// Rodrigues rotation of `p` about the line through `c` along unit `k`.
    fn rodrigues(p: &Point3, c: &Point3, k: &Vec3, theta: f64) -> Point3 {
        let k = k.normalize();
        let v = p - c;
        let rotated = v * theta.cos() + k.cross(&v) * theta.sin() + k * k.dot(&v) * (1.0 - theta.cos());
        c + rotated
    }

    #[test]
    fn zero_spec_is_identity() {
        let m = build_lander_like();
        let (cloud, gt) = apply_deformation(&m, &DeformationSpec::default()).unwrap();
        assert_eq!(cloud, m.cloud);
        assert_eq!(gt.correspondences.len(), m.cloud.len());
        assert!(gt.part_transforms.values().all(|x| *x == RigidTransform::identity()));
    }

    #[test]
    fn dish_follows_pole() {
        let m = build_lander_like();
        let spec = DeformationSpec::default().hinge(7, 30.0);
        let (cloud, _) = apply_deformation(&m, &spec).unwrap();
        let h = m.hinge(7).unwrap();
        for part in [7u32, 8] {
            for i in m.cloud.indices_of_part(part) {
                let expect = rodrigues(&m.cloud.points[i], &h.pivot, &h.axis, 30f64.to_radians());
                assert!((cloud.points[i] - expect).norm() < 1e-9);
            }
        }
        for i in m.cloud.indices_of_part(9) {
            assert_eq!(cloud.points[i], m.cloud.points[i]);
        }
    }

    #[test]
    fn axis_points_are_fixed() {
        let m = build_lander_like();
        let h = m.hinge(7).unwrap();
        let (_, gt) = apply_deformation(&m, &DeformationSpec::default().hinge(7, 47.0)).unwrap();
        let x = gt.part_transform(7).unwrap();
        for s in [-3.0, 0.0, 0.5, 10.0] {
            let p = h.pivot + h.axis * s;
            assert!((x.apply(&p) - p).norm() < 1e-12);
        }
    }

    #[test]
    fn non_movable_part_rejected() {
        let m = build_robot_like();
        assert_eq!(
            apply_deformation(&m, &DeformationSpec::default().hinge(4, 10.0)),
            Err(Error::NotMovable(4))
        );
    }

    #[test]
    fn chain_composes_with_body_pose() {
        let m = build_robot_like();
        let pose = RigidTransform::about_line(&Point3::new(1.0, 2.0, 3.0), &Vec3::new(0.2, 1.0, 0.4), 0.4);
        let spec = DeformationSpec::with_pose(pose).hinge(2, 35.0).hinge(3, -20.0);
        let (cloud, gt) = apply_deformation(&m, &spec).unwrap();
        let arm = m.hinge(2).unwrap();
        let hand = m.hinge(3).unwrap();
        for i in m.cloud.indices_of_part(3) {
            let p = m.cloud.points[i];
            let local = rodrigues(&p, &hand.pivot, &hand.axis, (-20f64).to_radians());
            let chained = rodrigues(&local, &arm.pivot, &arm.axis, 35f64.to_radians());
            let expect = pose.apply(&chained);
            assert!((cloud.points[i] - expect).norm() < 1e-9);
        }
        assert_eq!(gt.whole_body, pose);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn parts_stay_rigid(a in -60.0f64..60.0, b in -60.0f64..60.0, c in -60.0f64..60.0) {
            let m = build_lander_like();
            let spec = DeformationSpec::default().hinge(7, a).hinge(9, b).hinge(11, c);
            let (cloud, _) = apply_deformation(&m, &spec).unwrap();
            for part in &m.graph.parts {
                let idx = &part.point_indices;
                for w in idx.windows(2).step_by(7) {
                    let before = (m.cloud.points[w[0]] - m.cloud.points[w[1]]).norm();
                    let after = (cloud.points[w[0]] - cloud.points[w[1]]).norm();
                    prop_assert!((before - after).abs() < 1e-9);
                }
                let (first, last) = (idx[0], idx[idx.len() - 1]);
                let before = (m.cloud.points[first] - m.cloud.points[last]).norm();
                let after = (cloud.points[first] - cloud.points[last]).norm();
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
    }
}
