//! Camera-agnostic pseudo labels.

use crate::error::{Error, Result};

/// Label of an instance left out of every cluster.
pub const OUTLIER: i64 = -1;

/// Cluster id per instance, [`OUTLIER`] for instances outside every cluster.
/// Cluster ids are dense: each of `0..num_clusters` is used at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<i64>,
    num_clusters: usize,
}

impl ClusterAssignment {
    /// Validates an already dense labelling.
    pub fn new(labels: Vec<i64>) -> Result<Self> {
        let mut seen = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            if l == OUTLIER {
                continue;
            }
            if l < 0 {
                return Err(Error::InvalidParameter(format!("instance {i} has label {l}")));
            }
            let l = l as usize;
            if l >= seen.len() {
                seen.resize(l + 1, false);
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!("cluster id {missing} is unused")));
        }
        Ok(Self {
            num_clusters: seen.len(),
            labels,
        })
    }

    /// Accepts arbitrary labels (negative means outlier) and renumbers the
    /// clusters `0..Y` in order of first appearance.
    pub fn compact(raw: &[i64]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    OUTLIER
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            num_clusters: map.len(),
        }
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        let l = self.labels[i];
        (l != OUTLIER).then_some(l as usize)
    }

    /// Number of clustered (non-outlier) instances.
    pub fn num_clustered(&self) -> usize {
        self.labels.iter().filter(|&&l| l != OUTLIER).count()
    }

    pub fn num_outliers(&self) -> usize {
        self.len() - self.num_clustered()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            if l != OUTLIER {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Members of each cluster in ascending instance order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l != OUTLIER {
                m[l as usize].push(i);
            }
        }
        m
    }
}
