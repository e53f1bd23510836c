//! Rigid-part decomposition of the source model: parts, adjacency, volume
//! ordering and junction anchors between neighbouring parts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{aabb_of, Aabb, Point3, PointCloud, RigidTransform};
use crate::nn::{median_spacing, NnIndex};

/// Junction anchors kept per edge by default.
pub const DEFAULT_MAX_ANCHORS: usize = 10;
/// Junction radius as a fraction of the part's AABB diagonal.
pub const DEFAULT_JUNCTION_RADIUS_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub id: u32,
    pub name: String,
    pub point_indices: Vec<usize>,
    pub aabb: Aabb,
    pub volume: f64,
}

impl Part {
    fn new(id: u32, name: String, point_indices: Vec<usize>, cloud: &PointCloud) -> Result<Self> {
        let aabb = aabb_of(cloud, Some(&point_indices))?;
        Ok(Part {
            id,
            name,
            point_indices,
            aabb,
            volume: aabb.volume(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartGraph {
    pub parts: Vec<Part>,
    /// Unordered adjacency pairs stored as `(low id, high id)`, sorted.
    pub edges: Vec<(u32, u32)>,
}

fn labels_by_part(cloud: &PointCloud) -> Result<BTreeMap<u32, Vec<usize>>> {
    let ids = cloud.part_ids.as_ref().ok_or(Error::MissingPartLabels)?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &p) in ids.iter().enumerate() {
        groups.entry(p).or_default().push(i);
    }
    Ok(groups)
}

/// Smallest distance between any point of `a` and any point of `b`.
fn min_distance(cloud: &PointCloud, a: &[usize], b: &[usize]) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let pts: Vec<Point3> = large.iter().map(|&i| cloud.points[i]).collect();
    let index = NnIndex::new(&pts);
    small
        .iter()
        .filter_map(|&i| index.nearest(&cloud.points[i]).ok())
        .map(|(_, d)| d)
        .fold(f64::INFINITY, f64::min)
}

/// Default adjacency threshold: twice the median nearest-neighbour spacing.
pub fn default_adjacency_distance(cloud: &PointCloud) -> Option<f64> {
    median_spacing(&cloud.points).map(|s| 2.0 * s)
}

/// Builds the graph from a labelled cloud: one part per distinct label, an
/// edge wherever two parts come closer than `adjacency_distance`.
pub fn build_graph(cloud: &PointCloud, adjacency_distance: f64) -> Result<PartGraph> {
    if !(adjacency_distance > 0.0) {
        return Err(Error::InvalidArgument(
            "adjacency distance must be positive".into(),
        ));
    }
    let groups = labels_by_part(cloud)?;
    let parts = groups
        .into_iter()
        .map(|(id, idx)| Part::new(id, format!("part-{id}"), idx, cloud))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..parts.len())
        .flat_map(|a| ((a + 1)..parts.len()).map(move |b| (a, b)))
        .collect();
    let close = crate::par::map_slice(&pairs, |&(a, b)| {
        min_distance(cloud, &parts[a].point_indices, &parts[b].point_indices) < adjacency_distance
    });
    let edges = pairs
        .iter()
        .zip(close)
        .filter(|(_, c)| *c)
        .map(|(&(a, b), _)| (parts[a].id, parts[b].id))
        .collect();
    Ok(PartGraph { parts, edges })
}

impl PartGraph {
    /// Builds a graph with explicit names and edges from a labelled cloud.
    pub fn from_labels(
        cloud: &PointCloud,
        names: &BTreeMap<u32, String>,
        edges: &[(u32, u32)],
    ) -> Result<Self> {
        let groups = labels_by_part(cloud)?;
        let parts = groups
            .into_iter()
            .map(|(id, idx)| {
                let name = names.get(&id).cloned().unwrap_or_else(|| format!("part-{id}"));
                Part::new(id, name, idx, cloud)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut graph = PartGraph {
            parts,
            edges: Vec::new(),
        };
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self edge on part {a}")));
            }
            graph.part(a)?;
            graph.part(b)?;
            set.insert((a.min(b), a.max(b)));
        }
        graph.edges = set.into_iter().collect();
        Ok(graph)
    }

    pub fn part(&self, id: u32) -> Result<&Part> {
        self.parts
            .iter()
            .find(|p| p.id == id)
            .ok_or(Error::UnknownPart(id))
    }

    pub fn part_ids(&self) -> Vec<u32> {
        self.parts.iter().map(|p| p.id).collect()
    }

    pub fn are_adjacent(&self, a: u32, b: u32) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Neighbour ids of `id`, ascending.
    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let mut n: Vec<u32> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        n.sort_unstable();
        n
    }

    /// Recomputes every part's box and volume from current positions.
    pub fn refresh_bounds(&mut self, cloud: &PointCloud) -> Result<()> {
        for part in &mut self.parts {
            part.aabb = aabb_of(cloud, Some(&part.point_indices))?;
            part.volume = part.aabb.volume();
        }
        Ok(())
    }

    pub fn refresh_part_bounds(&mut self, id: u32, cloud: &PointCloud) -> Result<()> {
        let part = self
            .parts
            .iter_mut()
            .find(|p| p.id == id)
            .ok_or(Error::UnknownPart(id))?;
        part.aabb = aabb_of(cloud, Some(&part.point_indices))?;
        part.volume = part.aabb.volume();
        Ok(())
    }

    /// Checks that parts partition `0..n` and edges reference existing parts.
    pub fn validate(&self, n_points: usize) -> Result<()> {
        let mut seen = vec![false; n_points];
        for part in &self.parts {
            if part.point_indices.is_empty() {
                return Err(Error::InvalidArgument(format!("part {} has no points", part.id)));
            }
            for &i in &part.point_indices {
                if i >= n_points || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "point {i} is out of range or assigned twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("point {i} belongs to no part")));
        }
        for &(a, b) in &self.edges {
            if a >= b {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) not normalised")));
            }
            self.part(a)?;
            self.part(b)?;
        }
        Ok(())
    }
}

/// Part ids by non-increasing AABB volume; equal volumes keep ascending id order.
pub fn sort_parts_by_volume(graph: &PartGraph) -> Vec<u32> {
    let mut order: Vec<(u32, f64)> = graph.parts.iter().map(|p| (p.id, p.volume)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(id, _)| id).collect()
}

/// Points of one part that sit at its junction with a neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSet {
    pub part_id: u32,
    pub neighbor_id: u32,
    pub anchor_indices: Vec<usize>,
    /// Current world positions of the anchors.
    pub anchor_positions: Vec<Point3>,
    /// Where each anchor has to stay. Equal to `anchor_positions` unless the
    /// neighbour has already moved and the anchors must follow it.
    pub anchor_targets: Vec<Point3>,
}

impl JunctionSet {
    pub fn is_empty(&self) -> bool {
        self.anchor_indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.anchor_indices.len()
    }

    /// Moves the targets with the neighbour's motion.
    pub fn follow_neighbor(mut self, motion: &RigidTransform) -> Self {
        self.anchor_targets = self.anchor_positions.iter().map(|p| motion.apply(p)).collect();
        self
    }
}

/// Up to `max_anchors` points of `part_id` lying within `junction_radius` of
/// any point of `neighbor_id`, closest first (ties by lower index).
pub fn junction_points(
    graph: &PartGraph,
    cloud: &PointCloud,
    part_id: u32,
    neighbor_id: u32,
    junction_radius: f64,
    max_anchors: usize,
) -> Result<JunctionSet> {
    if !graph.are_adjacent(part_id, neighbor_id) {
        return Err(Error::NotAdjacent(part_id, neighbor_id));
    }
    if !(junction_radius > 0.0) {
        return Err(Error::InvalidArgument("junction radius must be positive".into()));
    }
    let part = graph.part(part_id)?;
    let neighbor = graph.part(neighbor_id)?;
    let npts: Vec<Point3> = neighbor.point_indices.iter().map(|&i| cloud.points[i]).collect();
    let index = NnIndex::new(&npts);
    let mut close: Vec<(f64, usize)> = part
        .point_indices
        .iter()
        .filter_map(|&i| {
            let (_, d) = index.nearest(&cloud.points[i]).ok()?;
            (d <= junction_radius).then_some((d, i))
        })
        .collect();
    close.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    close.truncate(max_anchors);
    let anchor_indices: Vec<usize> = close.iter().map(|&(_, i)| i).collect();
    let anchor_positions: Vec<Point3> = anchor_indices.iter().map(|&i| cloud.points[i]).collect();
    Ok(JunctionSet {
        part_id,
        neighbor_id,
        anchor_indices,
        anchor_targets: anchor_positions.clone(),
        anchor_positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCheck {
    pub passed: bool,
    pub max_displacement: f64,
}

/// Fails when `candidate` drags any anchor further than `tolerance` from
/// where it has to stay.
pub fn junction_break_check(
    junctions: &JunctionSet,
    candidate: &RigidTransform,
    tolerance: f64,
) -> Result<JointCheck> {
    if junctions.is_empty() {
        return Err(Error::NoAnchors);
    }
    let max_displacement = junctions
        .anchor_positions
        .iter()
        .zip(&junctions.anchor_targets)
        .map(|(p, target)| (candidate.apply(p) - target).norm())
        .fold(0.0, f64::max);
    Ok(JointCheck {
        passed: max_displacement <= tolerance,
        max_displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use rand::Rng;

    /// Surface grid of an axis-aligned cube with `n` samples per edge.
    fn cube_surface(origin: Point3, size: f64, n: usize) -> Vec<Point3> {
        let mut pts = Vec::new();
        let step = size / (n - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let on_face = [i, j, k].iter().any(|&v| v == 0 || v == n - 1);
                    if on_face {
                        pts.push(origin + Vec3::new(i as f64, j as f64, k as f64) * step);
                    }
                }
            }
        }
        pts
    }

    fn two_cubes(gap: f64) -> PointCloud {
        let a = cube_surface(Point3::origin(), 1.0, 6);
        let b = cube_surface(Point3::new(1.0 + gap, 0.0, 0.0), 1.0, 6);
        let ids = std::iter::repeat_n(0, a.len())
            .chain(std::iter::repeat_n(1, b.len()))
            .collect();
        PointCloud::with_part_ids([a, b].concat(), ids).unwrap()
    }

    fn brute_min_distance(cloud: &PointCloud, a: &[usize], b: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for &i in a {
            for &j in b {
                best = best.min((cloud.points[i] - cloud.points[j]).norm());
            }
        }
        best
    }

    #[test]
    fn touching_cubes_share_an_edge() {
        // Faces coincide; brute force confirms contact distance 0 < 0.05.
        let cloud = two_cubes(0.0);
        let g = build_graph(&cloud, 0.05).unwrap();
        assert_eq!(g.parts.len(), 2);
        let d = brute_min_distance(&cloud, &g.parts[0].point_indices, &g.parts[1].point_indices);
        assert!(d < 0.05);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn distant_cubes_are_not_adjacent() {
        let g = build_graph(&two_cubes(10.0), 0.05).unwrap();
        assert_eq!(g.parts.len(), 2);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn single_label_and_missing_labels() {
        let pts = cube_surface(Point3::origin(), 1.0, 4);
        let ids = vec![7; pts.len()];
        let g = build_graph(&PointCloud::with_part_ids(pts.clone(), ids).unwrap(), 0.1).unwrap();
        assert_eq!(g.parts.len(), 1);
        assert!(g.edges.is_empty());
        assert_eq!(
            build_graph(&PointCloud::new(pts), 0.1),
            Err(Error::MissingPartLabels)
        );
    }

    #[test]
    fn parts_partition_the_cloud() {
        let cloud = two_cubes(0.0);
        let g = build_graph(&cloud, 0.05).unwrap();
        g.validate(cloud.len()).unwrap();
        let total: usize = g.parts.iter().map(|p| p.point_indices.len()).sum();
        assert_eq!(total, cloud.len());
    }

    fn graph_with_volumes(volumes: &[f64]) -> PartGraph {
        PartGraph {
            parts: volumes
                .iter()
                .enumerate()
                .map(|(i, &v)| Part {
                    id: i as u32,
                    name: String::new(),
                    point_indices: vec![i],
                    aabb: Aabb::from_point(&Point3::origin()),
                    volume: v,
                })
                .collect(),
            edges: vec![],
        }
    }

    #[test]
    fn volume_order_examples() {
        assert_eq!(sort_parts_by_volume(&graph_with_volumes(&[3.0, 1.0, 2.0])), vec![0, 2, 1]);
        assert_eq!(sort_parts_by_volume(&graph_with_volumes(&[1.0, 1.0, 1.0])), vec![0, 1, 2]);
    }

    #[test]
    fn volume_order_matches_comparison_sort() {
        let mut rng = crate::seed::rng(21);
        let vols: Vec<f64> = (0..20).map(|_| rng.random_range(0..5) as f64).collect();
        let order = sort_parts_by_volume(&graph_with_volumes(&vols));
        // Oracle: selection by repeated max scan.
        let mut remaining: Vec<usize> = (0..20).collect();
        let mut expect = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for k in 1..remaining.len() {
                if vols[remaining[k]] > vols[remaining[best]] {
                    best = k;
                }
            }
            expect.push(remaining.remove(best) as u32);
        }
        assert_eq!(order, expect);
    }

    #[test]
    fn volume_order_is_scale_invariant() {
        let mut rng = crate::seed::rng(22);
        let mut pts = Vec::new();
        let mut ids = Vec::new();
        for part in 0..6u32 {
            let size = rng.random_range(0.5..3.0);
            for p in cube_surface(Point3::new(part as f64 * 10.0, 0.0, 0.0), size, 4) {
                pts.push(p);
                ids.push(part);
            }
        }
        let cloud = PointCloud::with_part_ids(pts, ids).unwrap();
        let g = build_graph(&cloud, 0.1).unwrap();
        let scaled = crate::geom::scale_cloud(&cloud, 3.7).unwrap();
        let gs = build_graph(&scaled, 0.1).unwrap();
        assert_eq!(sort_parts_by_volume(&g), sort_parts_by_volume(&gs));
    }

    #[test]
    fn junction_points_on_shared_face() {
        let cloud = two_cubes(0.0);
        let g = build_graph(&cloud, 0.05).unwrap();
        let j = junction_points(&g, &cloud, 1, 0, 0.1, 1000).unwrap();
        assert!(!j.is_empty());
        // Brute-force: every anchor is within radius of some neighbour point and belongs to part 1.
        for &i in &j.anchor_indices {
            assert_eq!(cloud.part_id(i), Some(1));
            let d = brute_min_distance(&cloud, &[i], &g.parts[0].point_indices);
            assert!(d <= 0.1);
            assert!((cloud.points[i].x - 1.0).abs() < 1e-12);
        }
        // And every qualifying point was found.
        let expected = g.parts[1]
            .point_indices
            .iter()
            .filter(|&&i| brute_min_distance(&cloud, &[i], &g.parts[0].point_indices) <= 0.1)
            .count();
        assert_eq!(j.len(), expected);
    }

    #[test]
    fn junction_edge_cases() {
        let cloud = two_cubes(0.5);
        let g = build_graph(&cloud, 1.0).unwrap();
        assert!(junction_points(&g, &cloud, 1, 0, 0.1, 10).unwrap().is_empty());
        let one = junction_points(&g, &cloud, 1, 0, 1.0, 1).unwrap();
        assert_eq!(one.len(), 1);
        // Closest junction point: x = 1.5 face, lowest index among ties.
        let first = g.parts[1]
            .point_indices
            .iter()
            .copied()
            .find(|&i| (cloud.points[i].x - 1.5).abs() < 1e-12)
            .unwrap();
        assert_eq!(one.anchor_indices, vec![first]);
        let far = build_graph(&two_cubes(10.0), 0.05).unwrap();
        assert_eq!(
            junction_points(&far, &two_cubes(10.0), 0, 1, 0.1, 10),
            Err(Error::NotAdjacent(0, 1))
        );
    }

    #[test]
    fn break_check_cases() {
        let cloud = two_cubes(0.0);
        let g = build_graph(&cloud, 0.05).unwrap();
        let j = junction_points(&g, &cloud, 1, 0, 0.1, 10).unwrap();
        let id = junction_break_check(&j, &RigidTransform::identity(), 1.0).unwrap();
        assert!(id.passed);
        assert_eq!(id.max_displacement, 0.0);
        let shift = RigidTransform::from_translation(Vec3::new(5.0, 0.0, 0.0));
        let r = junction_break_check(&j, &shift, 1.0).unwrap();
        assert!(!r.passed);
        assert!((r.max_displacement - 5.0).abs() < 1e-12);

        // Anchors on a common line; rotating about that line leaves them fixed.
        let line: Vec<Point3> = (0..5).map(|k| Point3::new(1.0, 0.2 * k as f64, 0.3)).collect();
        let set = JunctionSet {
            part_id: 1,
            neighbor_id: 0,
            anchor_indices: (0..5).collect(),
            anchor_targets: line.clone(),
            anchor_positions: line.clone(),
        };
        let centroid = Point3::new(1.0, 0.4, 0.3);
        let spin = RigidTransform::about_line(&centroid, &Vec3::y(), 1.2);
        let r = junction_break_check(&set, &spin, 1e-9).unwrap();
        assert!(r.passed, "displacement {}", r.max_displacement);

        let empty = JunctionSet {
            anchor_indices: vec![],
            anchor_positions: vec![],
            anchor_targets: vec![],
            ..set
        };
        assert_eq!(
            junction_break_check(&empty, &spin, 1.0),
            Err(Error::NoAnchors)
        );
    }
}
