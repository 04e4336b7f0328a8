//! Momentum memory bank of proxy (or cluster) centroids.
//!
//! Each entry is updated as `entry ← μ·entry + (1-μ)·feature` and, by
//! default, renormalised so that logits `entryᵀf / τ` stay within `±1/τ`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::binio::{BinReader, BinWriter};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, normalize_in_place, Matrix};
use crate::proxy::ProxyLabeling;

const MEMORY_MAGIC: &[u8; 4] = b"CAPK";
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMemory {
    /// One row per proxy.
    entries: Matrix,
    mu: f64,
    tau: f64,
    renormalize: bool,
}

impl ProxyMemory {
    pub fn from_entries(entries: Matrix, mu: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(invalid(format!("momentum {mu} outside [0, 1]")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid(format!("temperature {tau} must be positive")));
        }
        if let Some((row, col)) = entries.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            entries,
            mu,
            tau,
            renormalize: true,
        })
    }

    /// One entry per proxy: the normalised mean of its members' features.
    pub fn init(features: &Matrix, labeling: &ProxyLabeling, mu: f64, tau: f64) -> Result<Self> {
        let groups: Vec<&[usize]> = (0..labeling.num_proxies()).map(|p| labeling.members(p)).collect();
        Self::from_groups(features, &groups, mu, tau)
    }

    /// Cluster-level memory for the camera-agnostic baseline: one entry per
    /// cluster.
    pub fn init_clusters(features: &Matrix, labeling: &ProxyLabeling, mu: f64, tau: f64) -> Result<Self> {
        let members: Vec<Vec<usize>> = (0..labeling.num_clusters())
            .map(|y| {
                let mut m: Vec<usize> = labeling
                    .proxies_of_cluster(y)
                    .iter()
                    .flat_map(|&p| labeling.members(p).iter().copied())
                    .collect();
                m.sort_unstable();
                m
            })
            .collect();
        let groups: Vec<&[usize]> = members.iter().map(Vec::as_slice).collect();
        Self::from_groups(features, &groups, mu, tau)
    }

    pub fn from_groups(features: &Matrix, groups: &[&[usize]], mu: f64, tau: f64) -> Result<Self> {
        let d = features.cols();
        let mut entries = Matrix::zeros(groups.len(), d);
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(format!("proxy {g} has no members")));
            }
            let row = entries.row_mut(g);
            for &i in *members {
                for (r, f) in row.iter_mut().zip(features.row(i)) {
                    *r += f;
                }
            }
            let k = members.len() as f64;
            row.iter_mut().for_each(|r| *r /= k);
            if normalize_in_place(row) == 0.0 {
                return Err(Error::ZeroNorm { row: g });
            }
        }
        Self::from_entries(entries, mu, tau)
    }

    /// Keep (`true`, the default) or skip renormalisation after each update.
    pub fn with_renormalization(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn entry(&self, p: usize) -> &[f64] {
        self.entries.row(p)
    }

    pub fn update_entry(&mut self, proxy: usize, feature: &[f64]) -> Result<()> {
        if proxy >= self.len() {
            return Err(invalid(format!(
                "proxy {proxy} out of range for {} entries",
                self.len()
            )));
        }
        if feature.len() != self.dim() {
            return Err(Error::Shape(format!(
                "feature of length {} for a {}-dimensional memory",
                feature.len(),
                self.dim()
            )));
        }
        let n = norm(feature);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(invalid(format!("feature norm {n} is not 1")));
        }
        let mu = self.mu;
        let row = self.entries.row_mut(proxy);
        for (e, f) in row.iter_mut().zip(feature) {
            *e = mu * *e + (1.0 - mu) * f;
        }
        if self.renormalize && normalize_in_place(row) == 0.0 {
            return Err(Error::ZeroNorm { row: proxy });
        }
        Ok(())
    }

    /// Logits `entry_kᵀ·embedding / τ` for every entry.
    pub fn scores(&self, embedding: &[f64]) -> Vec<f64> {
        self.entries
            .iter_rows()
            .map(|e| dot(e, embedding) / self.tau)
            .collect()
    }

    /// `CAPK`, version, Z, d (u64), μ, τ (f64), renormalise byte, then Z×d
    /// row-major entries.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?), MEMORY_MAGIC)?;
        w.u64(self.len() as u64)?;
        w.u64(self.dim() as u64)?;
        w.f64(self.mu)?;
        w.f64(self.tau)?;
        w.u8(u8::from(self.renormalize))?;
        w.f64s(self.entries.as_slice())?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), MEMORY_MAGIC, "memory")?;
        let z = r.usize()?;
        let d = r.usize()?;
        let mu = r.f64()?;
        let tau = r.f64()?;
        let renormalize = r.u8()? != 0;
        let entries = Matrix::from_vec(z, d, r.f64s(z * d)?)?;
        r.expect_end()?;
        Ok(Self::from_entries(entries, mu, tau)?.with_renormalization(renormalize))
    }
}
