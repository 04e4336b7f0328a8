//! DBSCAN over a precomputed distance matrix and reliable-cluster filtering.

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::labels::{ClusterAssignment, OUTLIER};
use crate::metric::DistanceMatrix;

/// Density-based clustering on precomputed distances.
///
/// A point is core when at least `min_pts` points (itself included) lie within
/// `eps` (inclusive). Points are scanned in ascending order; each unvisited
/// core point seeds the next cluster id, which is then expanded breadth-first.
/// A border point reachable from several clusters keeps the first one that
/// reached it. Points reachable from no core point are [`OUTLIER`].
pub fn dbscan(dist: &DistanceMatrix, eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("eps = {eps} must be positive")));
    }
    if min_pts < 1 {
        return Err(invalid("min_pts must be at least 1"));
    }
    let n = dist.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist.get(i, j) <= eps).collect())
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![OUTLIER; n];
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed] != OUTLIER || !is_core[seed] {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            // only core points propagate the cluster
            if !is_core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if labels[q] == OUTLIER {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    ClusterAssignment::new(labels)
}

/// Dissolves clusters with fewer than `min_cluster_size` members into
/// outliers and renumbers the survivors, keeping their relative order.
pub fn filter_reliable(assignment: &ClusterAssignment, min_cluster_size: usize) -> ClusterAssignment {
    let sizes = assignment.cluster_sizes();
    let mut remap = vec![OUTLIER; sizes.len()];
    let mut next = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s >= min_cluster_size.max(1) {
            remap[c] = next;
            next += 1;
        }
    }
    let labels: Vec<i64> = assignment
        .labels()
        .iter()
        .map(|&l| if l == OUTLIER { OUTLIER } else { remap[l as usize] })
        .collect();
    ClusterAssignment::new(labels).expect("survivor ids are dense")
}
