use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use crate::nn::NnIndex;

/// Density clustering. Returns a cluster label per point, `None` for noise.
/// Clusters are numbered in the order their first core point appears, and
/// a border point joins the first cluster that reaches it.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let index = NnIndex::new(points);
    let neighbours: Vec<Vec<usize>> = crate::par::map_slice(points, |p| index.within_radius(p, eps));
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut cluster = 0;
    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        if neighbours[start].len() < min_pts {
            continue;
        }
        labels[start] = Some(cluster);
        let mut queue: VecDeque<usize> = neighbours[start].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q].is_none() {
                labels[q] = Some(cluster);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            if neighbours[q].len() >= min_pts {
                queue.extend(neighbours[q].iter().copied());
            }
        }
        cluster += 1;
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub cloud: PointCloud,
    /// Index in the input cloud of every kept point, ascending.
    pub kept_indices: Vec<usize>,
}

/// Drops points further than `distance_threshold` from the scene centroid,
/// clusters the rest and keeps the largest cluster (lowest label on ties).
pub fn segment_target(cloud: &PointCloud, distance_threshold: f64, eps: f64, min_pts: usize) -> Result<Segmentation> {
    if !(eps > 0.0) || min_pts < 1 {
        return Err(Error::InvalidArgument("dbscan needs eps > 0 and min_pts >= 1".into()));
    }
    let centroid = cloud.centroid().ok_or(Error::NoClusterFound)?;
    let near: Vec<usize> = (0..cloud.len())
        .filter(|&i| (cloud.points[i] - centroid).norm() <= distance_threshold)
        .collect();
    let pts: Vec<Point3> = near.iter().map(|&i| cloud.points[i]).collect();
    let labels = dbscan(&pts, eps, min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    let best = (0..n_clusters)
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .ok_or(Error::NoClusterFound)?;
    let kept_indices: Vec<usize> = near
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Some(best))
        .map(|(&i, _)| i)
        .collect();
    Ok(Segmentation {
        cloud: cloud.select(&kept_indices),
        kept_indices,
    })
}
