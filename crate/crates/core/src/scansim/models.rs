//! Procedural articulated test subjects.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::sampling::{align_z, box_surface, hex_prism_surface, spherical_cap};
use crate::error::{Error, Result};
use crate::geom::{scale_cloud, Point3, PointCloud, RigidTransform, Vec3};
use crate::partgraph::PartGraph;
use crate::seed;

const MODEL_SEED: u64 = 0x0005_eed0_fa11;
/// Surface samples per unit area in base model units.
const DENSITY: f64 = 14.0;
const MIN_PART_POINTS: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lander,
    Robot,
}

impl ModelKind {
    pub fn build(self) -> ArticulatedModel {
        match self {
            ModelKind::Lander => build_lander_like(),
            ModelKind::Robot => build_robot_like(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lander => "lander",
            ModelKind::Robot => "robot",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lander" => Ok(ModelKind::Lander),
            "robot" => Ok(ModelKind::Robot),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

/// Revolute joint of a movable part, expressed in the undeformed model frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub part: u32,
    pub parent: u32,
    pub pivot: Point3,
    pub axis: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedModel {
    pub kind: ModelKind,
    pub cloud: PointCloud,
    pub graph: PartGraph,
    pub hinges: Vec<Hinge>,
}

impl ArticulatedModel {
    pub fn hinge(&self, part: u32) -> Option<&Hinge> {
        self.hinges.iter().find(|h| h.part == part)
    }

    pub fn movable_parts(&self) -> Vec<u32> {
        self.hinges.iter().map(|h| h.part).collect()
    }

    /// Parts ordered so that every hinge parent precedes its child.
    pub fn kinematic_order(&self) -> Vec<u32> {
        let mut order: Vec<u32> = self
            .graph
            .part_ids()
            .into_iter()
            .filter(|&p| self.hinge(p).is_none())
            .collect();
        let mut pending: Vec<u32> = self.movable_parts();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&p| {
                let parent = self.hinge(p).map(|h| h.parent).unwrap_or(p);
                if order.contains(&parent) {
                    order.push(p);
                    false
                } else {
                    true
                }
            });
            if pending.len() == before {
                // Cyclic hinge chain; append as-is so callers still see every part.
                order.append(&mut pending);
            }
        }
        order
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate(self.cloud.len())?;
        for h in &self.hinges {
            self.graph.part(h.part)?;
            if !self.graph.are_adjacent(h.part, h.parent) {
                return Err(Error::NotAdjacent(h.part, h.parent));
            }
            if !(h.axis.norm() > 0.0) {
                return Err(Error::InvalidArgument(format!("zero hinge axis on part {}", h.part)));
            }
        }
        Ok(())
    }

    /// Uniformly scaled copy; hinge pivots scale with the geometry.
    pub fn scaled(&self, factor: f64) -> Result<ArticulatedModel> {
        let cloud = scale_cloud(&self.cloud, factor)?;
        let mut graph = self.graph.clone();
        graph.refresh_bounds(&cloud)?;
        let hinges = self
            .hinges
            .iter()
            .map(|h| Hinge {
                pivot: Point3::from(h.pivot.coords * factor),
                ..h.clone()
            })
            .collect();
        Ok(ArticulatedModel {
            kind: self.kind,
            cloud,
            graph,
            hinges,
        })
    }
}

enum Prim {
    Box { half: Vec3, pose: RigidTransform },
    Hex { radius: f64, height: f64, pose: RigidTransform },
    Cap { sphere_r: f64, half_angle: f64, pose: RigidTransform },
}

impl Prim {
    fn area(&self) -> f64 {
        match self {
            Prim::Box { half, .. } => 8.0 * (half.x * half.y + half.y * half.z + half.x * half.z),
            Prim::Hex { radius, height, .. } => 3.0 * 3f64.sqrt() * radius * radius + 6.0 * radius * height,
            Prim::Cap { sphere_r, half_angle, .. } => 2.0 * PI * sphere_r * sphere_r * (1.0 - half_angle.cos()),
        }
    }
}

fn boxed(half: [f64; 3], center: [f64; 3]) -> Prim {
    Prim::Box {
        half: Vec3::from(half),
        pose: RigidTransform::from_translation(Vec3::from(center)),
    }
}

/// Box of cross-section `2w x 2w` spanning the segment `from -> to`.
fn strut(from: Point3, to: Point3, w: f64) -> Prim {
    let d = to - from;
    let pose = RigidTransform::from_translation(from.coords + d / 2.0).compose(&align_z(&d));
    Prim::Box {
        half: Vec3::new(w, w, d.norm() / 2.0),
        pose,
    }
}

struct PartSpec {
    id: u32,
    name: &'static str,
    prims: Vec<Prim>,
}

fn sample_part(spec: &PartSpec) -> Vec<Point3> {
    let areas: Vec<f64> = spec.prims.iter().map(Prim::area).collect();
    let total: f64 = areas.iter().sum();
    let target = ((total * DENSITY).round() as usize).max(MIN_PART_POINTS);
    let mut rng = seed::rng(seed::derive(MODEL_SEED, &[spec.id as u64]));
    let mut out = Vec::with_capacity(target + spec.prims.len());
    for (prim, area) in spec.prims.iter().zip(&areas) {
        let n = ((target as f64) * area / total).ceil() as usize;
        out.extend(match prim {
            Prim::Box { half, pose } => box_surface(&mut rng, *half, pose, n),
            Prim::Hex { radius, height, pose } => hex_prism_surface(&mut rng, *radius, *height, pose, n),
            Prim::Cap { sphere_r, half_angle, pose } => spherical_cap(&mut rng, *sphere_r, *half_angle, pose, n),
        });
    }
    out
}

fn assemble(
    kind: ModelKind,
    parts: Vec<(u32, &'static str, Vec<Point3>)>,
    edges: &[(u32, u32)],
    hinges: Vec<Hinge>,
) -> ArticulatedModel {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut names = BTreeMap::new();
    for (id, name, pts) in parts {
        labels.extend(std::iter::repeat_n(id, pts.len()));
        points.extend(pts);
        names.insert(id, name.to_string());
    }
    let cloud = PointCloud::with_part_ids(points, labels).expect("labels match points");
    let graph = PartGraph::from_labels(&cloud, &names, edges).expect("edges reference known parts");
    let model = ArticulatedModel {
        kind,
        cloud,
        graph,
        hinges,
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Lander-like object: hexagonal body, three legs with pads, a tilting dish on
/// a pole, a sensor head on a two-joint mast and an antenna.
pub fn build_lander_like() -> ArticulatedModel {
    let mut specs = vec![PartSpec {
        id: 0,
        name: "body",
        prims: vec![Prim::Hex {
            radius: 6.0,
            height: 3.5,
            pose: RigidTransform::identity(),
        }],
    }];
    let mut edges = Vec::new();
    let leg_names = ["leg-a", "leg-b", "leg-c"];
    let foot_names = ["foot-a", "foot-b", "foot-c"];
    for k in 0..3u32 {
        let a = PI / 2.0 + 2.0 * PI / 3.0 * k as f64;
        let (c, s) = (a.cos(), a.sin());
        specs.push(PartSpec {
            id: 1 + k,
            name: leg_names[k as usize],
            prims: vec![strut(
                Point3::new(4.8 * c, 4.8 * s, 0.8),
                Point3::new(9.5 * c, 9.5 * s, -4.0),
                0.35,
            )],
        });
        specs.push(PartSpec {
            id: 4 + k,
            name: foot_names[k as usize],
            prims: vec![boxed([1.3, 1.3, 0.2], [9.5 * c, 9.5 * s, -4.15])],
        });
        edges.push((0, 1 + k));
        edges.push((1 + k, 4 + k));
    }

    let dish_vertex = Point3::new(2.5, 0.0, 7.55);
    let dish_axis = Vec3::new(1.0, 0.0, 1.0).normalize();
    let dish_pose = RigidTransform::from_translation(dish_vertex.coords).compose(&align_z(&dish_axis));
    let antenna_base = Point3::new(-2.0, -3.0, 3.4);
    let antenna_top = antenna_base + Vec3::new(-0.3, -0.2, 1.0).normalize() * 5.0;
    specs.extend([
        PartSpec {
            id: 7,
            name: "dish-pole",
            // The side fin fixes the spin about the pole's long axis.
            prims: vec![boxed([0.3, 0.3, 2.1], [2.5, 0.0, 5.5]), boxed([0.1, 0.8, 0.4], [2.5, 1.1, 4.9])],
        },
        PartSpec {
            id: 8,
            name: "dish",
            prims: vec![
                Prim::Cap {
                    sphere_r: 4.0,
                    half_angle: 40f64.to_radians(),
                    pose: dish_pose,
                },
                // Feed rod along the dish axis and a rim tab break the cap's symmetry.
                Prim::Box {
                    half: Vec3::new(0.1, 0.1, 0.9),
                    pose: dish_pose.compose(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.9))),
                },
                Prim::Box {
                    half: Vec3::new(0.5, 0.3, 0.1),
                    pose: dish_pose.compose(&RigidTransform::from_translation(Vec3::new(0.0, 2.7, 0.95))),
                },
            ],
        },
        PartSpec {
            id: 9,
            name: "sensor-pole",
            prims: vec![boxed([0.25, 0.25, 1.6], [-2.5, 2.0, 5.0]), boxed([0.6, 0.08, 0.35], [-1.65, 2.0, 4.6])],
        },
        PartSpec {
            id: 10,
            name: "sensor-joint",
            prims: vec![boxed([0.6, 0.6, 0.6], [-2.5, 2.0, 7.15]), boxed([0.2, 0.3, 0.2], [-3.3, 1.8, 7.35])],
        },
        PartSpec {
            id: 11,
            name: "sensor",
            prims: vec![
                boxed([0.5, 1.3, 0.45], [-2.5, 3.85, 7.15]),
                boxed([0.3, 0.15, 0.3], [-2.2, 5.3, 7.3]),
            ],
        },
        PartSpec {
            id: 12,
            name: "antenna",
            prims: vec![
                strut(antenna_base, antenna_top, 0.3),
                boxed([1.2, 0.2, 0.2], [antenna_top.x + 0.6, antenna_top.y, antenna_top.z]),
            ],
        },
    ]);
    edges.extend([(0, 7), (7, 8), (0, 9), (9, 10), (10, 11), (0, 12)]);

    let hinges = vec![
        Hinge { part: 7, parent: 0, pivot: Point3::new(2.5, 0.0, 3.5), axis: Vec3::y() },
        Hinge { part: 8, parent: 7, pivot: dish_vertex, axis: Vec3::y() },
        Hinge { part: 9, parent: 0, pivot: Point3::new(-2.5, 2.0, 3.5), axis: Vec3::x() },
        Hinge { part: 10, parent: 9, pivot: Point3::new(-2.5, 2.0, 6.6), axis: Vec3::z() },
        Hinge { part: 11, parent: 10, pivot: Point3::new(-2.5, 2.6, 7.15), axis: Vec3::x() },
        Hinge {
            part: 12,
            parent: 0,
            pivot: Point3::new(-2.0, -3.0, 3.5),
            axis: Vec3::new(1.0, 1.0, 0.0).normalize(),
        },
    ];
    let parts = specs.iter().map(|s| (s.id, s.name, sample_part(s))).collect();
    assemble(ModelKind::Lander, parts, &edges, hinges)
}

fn mirror_x(p: &Point3) -> Point3 {
    Point3::new(-p.x, p.y, p.z)
}

/// Cuboid humanoid with mirrored left and right limbs.
pub fn build_robot_like() -> ArticulatedModel {
    let torso = PartSpec {
        id: 0,
        name: "torso",
        prims: vec![boxed([3.0, 2.0, 4.0], [0.0, 0.0, 10.0])],
    };
    let head = PartSpec {
        id: 1,
        name: "head",
        prims: vec![
            boxed([1.75, 1.75, 1.6], [0.0, 0.0, 15.55]),
            boxed([0.3, 0.4, 0.3], [0.0, -2.1, 15.5]),
        ],
    };
    let arm = PartSpec {
        id: 2,
        name: "left-arm",
        prims: vec![
            boxed([1.0, 1.0, 2.75], [5.0, 0.0, 10.75]),
            boxed([0.6, 0.55, 0.5], [3.5, 0.0, 13.0]),
        ],
    };
    let hand = PartSpec {
        id: 3,
        name: "left-hand",
        prims: vec![
            boxed([0.8, 0.8, 0.9], [5.0, 0.0, 7.05]),
            boxed([0.25, 0.3, 0.3], [5.0, -1.05, 7.3]),
        ],
    };
    let leg = PartSpec {
        id: 4,
        name: "left-leg",
        prims: vec![boxed([1.0, 1.1, 2.95], [1.6, 0.0, 3.1])],
    };
    let foot = PartSpec {
        id: 5,
        name: "left-foot",
        prims: vec![boxed([1.2, 1.8, 0.5], [1.6, -0.6, -0.3])],
    };

    let mut parts: Vec<(u32, &'static str, Vec<Point3>)> = [&torso, &head]
        .iter()
        .map(|s| (s.id, s.name, sample_part(s)))
        .collect();
    let right_names = ["right-arm", "right-hand", "right-leg", "right-foot"];
    let left: Vec<(u32, &'static str, Vec<Point3>)> = [&arm, &hand, &leg, &foot]
        .iter()
        .map(|s| (s.id, s.name, sample_part(s)))
        .collect();
    let right: Vec<(u32, &'static str, Vec<Point3>)> = left
        .iter()
        .zip(right_names)
        .map(|((id, _, pts), name)| (id + 4, name, pts.iter().map(mirror_x).collect()))
        .collect();
    parts.extend(left);
    parts.extend(right);

    let edges = [(0, 1), (0, 2), (2, 3), (0, 4), (4, 5), (0, 6), (6, 7), (0, 8), (8, 9)];
    let left_hinges = [
        Hinge { part: 2, parent: 0, pivot: Point3::new(3.0, 0.0, 13.0), axis: Vec3::x() },
        Hinge { part: 3, parent: 2, pivot: Point3::new(5.0, 0.0, 8.0), axis: Vec3::x() },
    ];
    let mut hinges = vec![Hinge {
        part: 1,
        parent: 0,
        pivot: Point3::new(0.0, 0.0, 14.0),
        axis: Vec3::z(),
    }];
    for h in &left_hinges {
        hinges.push(h.clone());
    }
    for h in &left_hinges {
        hinges.push(Hinge {
            part: h.part + 4,
            parent: if h.parent == 0 { 0 } else { h.parent + 4 },
            pivot: mirror_x(&h.pivot),
            axis: Vec3::new(-h.axis.x, h.axis.y, h.axis.z),
        });
    }
    assemble(ModelKind::Robot, parts, &edges, hinges)
}
