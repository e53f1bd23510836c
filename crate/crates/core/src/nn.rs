//! Exact nearest-neighbour index (static kd-tree).

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a snapshot of points.
///
/// Nearest queries return the point minimising Euclidean distance; among
/// equidistant points the lowest index wins.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NnIndex {
    pub fn new(points: &[Point3]) -> Self {
        let mut index = NnIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::new(&cloud.points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &i in &self.order[start..end] {
                for k in 0..3 {
                    lo[k] = lo[k].min(self.points[i][k]);
                    hi[k] = hi[k].max(self.points[i][k]);
                }
            }
            (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0)
        };
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Index and distance of the closest point to `query`.
    pub fn nearest(&self, query: &Point3) -> Result<(usize, f64)> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_rec(0, query, usize::MAX, &mut best);
        Ok((best.1, best.0.sqrt()))
    }

    fn nearest_rec(&self, node: usize, q: &Point3, skip: usize, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == skip {
                        continue;
                    }
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, skip, best);
                // `<=` keeps equidistant candidates reachable for the tie rule.
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, skip, best);
                }
            }
        }
    }

    /// All indices within `radius` (inclusive) of `query`, ascending.
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() && radius >= 0.0 {
            self.radius_rec(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &Point3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }

    /// Nearest neighbour for many queries at once, in query order.
    pub fn nearest_batch(&self, queries: &[Point3]) -> Result<Vec<(usize, f64)>> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(crate::par::map_slice(queries, |q| {
            self.nearest(q).expect("non-empty index")
        }))
    }
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(points: &[Point3]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let index = NnIndex::new(points);
    let mut d: Vec<f64> =
        crate::par::map_range(points.len(), |i| index.nearest_other_distance(&points[i], i));
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

impl NnIndex {
    /// Distance from point `skip` of the index to its nearest other point.
    fn nearest_other_distance(&self, q: &Point3, skip: usize) -> f64 {
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_rec(0, q, skip, &mut best);
        best.0.sqrt()
    }
}
