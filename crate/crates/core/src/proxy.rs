//! Camera-aware proxies: every cluster is split into one proxy per camera it
//! appears in, and proxies are numbered independently inside each camera.
//!
//! Global proxy indices are laid out camera by camera, so the proxy of
//! instance `i` is `camera_offsets[c_i] + per_camera_label`. That layout is
//! what lets the intra-camera loss address "all proxies of my camera" as one
//! contiguous range.

use std::path::Path;

use crate::data::UnlabeledSet;
use crate::error::{Error, Result};
use crate::labels::{ClusterAssignment, OUTLIER};
use crate::linalg::dot;
use crate::memory::ProxyMemory;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyLabeling {
    proxy_of_instance: Vec<i64>,
    cluster_of_proxy: Vec<usize>,
    camera_of_proxy: Vec<usize>,
    per_camera_label: Vec<usize>,
    camera_offsets: Vec<usize>,
    per_camera_counts: Vec<usize>,
    per_camera_image_counts: Vec<usize>,
    num_clusters: usize,
    proxies_of_cluster: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
}

/// Splits camera-agnostic clusters into camera-aware proxies.
///
/// Inside each camera, the proxies are labelled `0..Z_c` in ascending
/// cluster order.
pub fn split_by_camera(assignment: &ClusterAssignment, set: &UnlabeledSet) -> Result<ProxyLabeling> {
    if assignment.len() != set.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} instances",
            assignment.len(),
            set.len()
        )));
    }
    let num_cameras = set.num_cameras();
    let num_clusters = assignment.num_clusters();
    let cameras = set.cameras();

    // present[c][y]: does cluster y have an instance in camera c
    let mut present = vec![vec![false; num_clusters]; num_cameras];
    let mut per_camera_image_counts = vec![0; num_cameras];
    for (i, &c) in cameras.iter().enumerate() {
        if let Some(y) = assignment.cluster_of(i) {
            present[c][y] = true;
            per_camera_image_counts[c] += 1;
        }
    }

    let mut camera_offsets = Vec::with_capacity(num_cameras);
    let mut per_camera_counts = Vec::with_capacity(num_cameras);
    let mut cluster_of_proxy = Vec::new();
    let mut camera_of_proxy = Vec::new();
    let mut per_camera_label = Vec::new();
    // local_of[c][y]: per-camera label of (y, c)
    let mut local_of = vec![vec![usize::MAX; num_clusters]; num_cameras];
    for c in 0..num_cameras {
        camera_offsets.push(cluster_of_proxy.len());
        let mut z = 0;
        for y in 0..num_clusters {
            if present[c][y] {
                local_of[c][y] = z;
                cluster_of_proxy.push(y);
                camera_of_proxy.push(c);
                per_camera_label.push(z);
                z += 1;
            }
        }
        per_camera_counts.push(z);
    }

    let num_proxies = cluster_of_proxy.len();
    let mut members = vec![Vec::new(); num_proxies];
    let proxy_of_instance = (0..set.len())
        .map(|i| match assignment.cluster_of(i) {
            Some(y) => {
                let c = cameras[i];
                let p = camera_offsets[c] + local_of[c][y];
                members[p].push(i);
                p as i64
            }
            None => OUTLIER,
        })
        .collect();
    let mut proxies_of_cluster = vec![Vec::new(); num_clusters];
    for (p, &y) in cluster_of_proxy.iter().enumerate() {
        proxies_of_cluster[y].push(p);
    }

    Ok(ProxyLabeling {
        proxy_of_instance,
        cluster_of_proxy,
        camera_of_proxy,
        per_camera_label,
        camera_offsets,
        per_camera_counts,
        per_camera_image_counts,
        num_clusters,
        proxies_of_cluster,
        members,
    })
}

impl ProxyLabeling {
    pub fn num_instances(&self) -> usize {
        self.proxy_of_instance.len()
    }

    /// Z, the total number of proxies.
    pub fn num_proxies(&self) -> usize {
        self.cluster_of_proxy.len()
    }

    /// Y, the number of camera-agnostic clusters.
    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_cameras(&self) -> usize {
        self.camera_offsets.len()
    }

    /// Global proxy index per instance, [`OUTLIER`] for outliers.
    pub fn proxy_of_instance(&self) -> &[i64] {
        &self.proxy_of_instance
    }

    pub fn proxy_of(&self, i: usize) -> Option<usize> {
        let p = self.proxy_of_instance[i];
        (p != OUTLIER).then_some(p as usize)
    }

    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.proxy_of(i).map(|p| self.cluster_of_proxy[p])
    }

    pub fn cluster_of_proxy(&self) -> &[usize] {
        &self.cluster_of_proxy
    }

    pub fn camera_of_proxy(&self) -> &[usize] {
        &self.camera_of_proxy
    }

    pub fn per_camera_label(&self) -> &[usize] {
        &self.per_camera_label
    }

    pub fn camera_offsets(&self) -> &[usize] {
        &self.camera_offsets
    }

    /// Z_c for every camera.
    pub fn per_camera_counts(&self) -> &[usize] {
        &self.per_camera_counts
    }

    /// N_c: clustered images per camera.
    pub fn per_camera_image_counts(&self) -> &[usize] {
        &self.per_camera_image_counts
    }

    /// Global proxy range `A .. A + Z_c` of camera `c`.
    pub fn camera_range(&self, c: usize) -> std::ops::Range<usize> {
        let a = self.camera_offsets[c];
        a..a + self.per_camera_counts[c]
    }

    pub fn global_index(&self, camera: usize, local: usize) -> usize {
        self.camera_offsets[camera] + local
    }

    pub fn camera_and_local(&self, proxy: usize) -> (usize, usize) {
        (self.camera_of_proxy[proxy], self.per_camera_label[proxy])
    }

    pub fn proxies_of_cluster(&self, cluster: usize) -> &[usize] {
        &self.proxies_of_cluster[cluster]
    }

    /// Instances of each proxy in ascending order.
    pub fn members(&self, proxy: usize) -> &[usize] {
        &self.members[proxy]
    }

    /// Cluster of every instance as a [`ClusterAssignment`]-style label vector.
    pub fn cluster_labels(&self) -> Vec<i64> {
        (0..self.num_instances())
            .map(|i| self.cluster_of(i).map_or(OUTLIER, |y| y as i64))
            .collect()
    }

    /// Audit dump: `key,camera,cluster,proxy_global,proxy_in_camera`, with
    /// `-1` in the last three columns for outliers.
    pub fn write_csv(&self, set: &UnlabeledSet, path: impl AsRef<Path>) -> Result<()> {
        if set.len() != self.num_instances() {
            return Err(Error::Shape("labeling and dataset sizes differ".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["key", "camera", "cluster", "proxy_global", "proxy_in_camera"])?;
        let cams = set.camera_labels();
        for (i, cam) in cams.iter().enumerate() {
            let (cluster, proxy, local) = match self.proxy_of(i) {
                Some(p) => (
                    self.cluster_of_proxy[p] as i64,
                    p as i64,
                    self.per_camera_label[p] as i64,
                ),
                None => (OUTLIER, OUTLIER, OUTLIER),
            };
            w.write_record([
                set.keys()[i].clone(),
                cam.to_string(),
                cluster.to_string(),
                proxy.to_string(),
                local.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cross-camera positive proxies of instance `i`: the proxies of its cluster
/// in every other camera. Empty when the cluster lives in one camera only.
pub fn positive_set(labeling: &ProxyLabeling, instance: usize) -> Result<Vec<usize>> {
    let own = labeling.proxy_of(instance).ok_or(Error::Outlier(instance))?;
    let cluster = labeling.cluster_of_proxy[own];
    let camera = labeling.camera_of_proxy[own];
    Ok(labeling.proxies_of_cluster[cluster]
        .iter()
        .copied()
        .filter(|&p| labeling.camera_of_proxy[p] != camera)
        .collect())
}

/// The `k` proxies of other clusters (any camera) whose memory entries are
/// most similar to `embedding`. Ties go to the lower proxy index.
pub fn hard_negative_set(
    labeling: &ProxyLabeling,
    memory: &ProxyMemory,
    embedding: &[f64],
    instance: usize,
    k: usize,
) -> Result<Vec<usize>> {
    let cluster = labeling.cluster_of(instance).ok_or(Error::Outlier(instance))?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut negatives: Vec<(f64, usize)> = (0..labeling.num_proxies())
        .filter(|&p| labeling.cluster_of_proxy[p] != cluster)
        .map(|p| (dot(memory.entry(p), embedding) + 0.0, p))
        .collect();
    let by_similarity = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < negatives.len() {
        negatives.select_nth_unstable_by(k - 1, by_similarity);
        negatives.truncate(k);
    }
    negatives.sort_unstable_by(by_similarity);
    Ok(negatives.into_iter().map(|(_, p)| p).collect())
}
