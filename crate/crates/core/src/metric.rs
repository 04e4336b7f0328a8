//! Pairwise distances and the k-reciprocal Jaccard distance that feeds
//! clustering.
//!
//! The Jaccard distance follows the usual re-ranking recipe:
//!
//! * rank every instance's neighbours by squared Euclidean distance (the
//!   instance itself always comes first, ties by ascending index),
//! * keep the k-reciprocal neighbours `R(i, k1)` and expand them with the
//!   reciprocal sets of their members at `k1 / 2` when those overlap by at
//!   least two thirds,
//! * turn the expanded set into a weight vector `V_i[j] ∝ exp(-d²(i, j))`
//!   summing to one, average it over the `k2` nearest neighbours,
//! * `d_J(i, j) = 1 - Σ min(V_i, V_j) / Σ max(V_i, V_j)`.
//!
//! Every row is computed independently with a fixed summation order, so the
//! rayon row parallelism never changes a bit of the output.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{BinReader, BinWriter};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

const DISTANCE_MAGIC: &[u8; 4] = b"CAPM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Euclidean,
    Jaccard,
}

/// Symmetric, non-negative N×N distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Matrix,
    kind: DistanceKind,
}

impl DistanceMatrix {
    /// Wraps `values` after checking the invariants for `kind`.
    pub fn new(values: Matrix, kind: DistanceKind) -> Result<Self> {
        let d = Self { values, kind };
        d.check_invariants()?;
        Ok(d)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.values.rows();
        if self.values.cols() != n {
            return Err(Error::Shape(format!(
                "distance matrix is {}x{}",
                n,
                self.values.cols()
            )));
        }
        for i in 0..n {
            if self.values.get(i, i) != 0.0 {
                return Err(invalid(format!("diagonal entry {i} is non-zero")));
            }
            for j in 0..n {
                let v = self.values.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid(format!("entry ({i}, {j}) = {v}")));
                }
                if self.kind == DistanceKind::Jaccard && v > 1.0 {
                    return Err(invalid(format!("jaccard entry ({i}, {j}) = {v} > 1")));
                }
                if (v - self.values.get(j, i)).abs() > 1e-9 {
                    return Err(invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    /// `CAPM`, version, N (u64), kind byte (0 euclidean, 1 jaccard), then
    /// N×N row-major f64.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?), DISTANCE_MAGIC)?;
        w.u64(self.len() as u64)?;
        w.u8(match self.kind {
            DistanceKind::Euclidean => 0,
            DistanceKind::Jaccard => 1,
        })?;
        w.f64s(self.values.as_slice())?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), DISTANCE_MAGIC, "distance")?;
        let n = r.usize()?;
        let kind = match r.u8()? {
            0 => DistanceKind::Euclidean,
            1 => DistanceKind::Jaccard,
            b => {
                return Err(Error::Format {
                    what: "distance",
                    reason: format!("unknown kind {b}"),
                })
            }
        };
        let values = Matrix::from_vec(n, n, r.f64s(n * n)?)?;
        r.expect_end()?;
        Self::new(values, kind)
    }
}

/// Squared Euclidean distances. With `normalized` the rows are taken to be
/// unit vectors and `2 - 2·cos` is used; otherwise differences are summed
/// directly.
fn squared_distances(features: &Matrix, normalized: bool) -> Matrix {
    let n = features.rows();
    let mut out = Matrix::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let a = features.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                if i == j {
                    continue;
                }
                let b = features.row(j);
                *slot = if normalized {
                    (2.0 - 2.0 * dot(a, b)).max(0.0)
                } else {
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
                };
            }
        });
    // The normalised branch is symmetric only up to rounding of dot().
    if normalized {
        symmetrize(&mut out);
    }
    out
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        m.set(i, i, 0.0);
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
}

pub fn pairwise_euclidean(features: &Matrix, normalized: bool) -> Result<DistanceMatrix> {
    if let Some((row, col)) = features.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let mut values = squared_distances(features, normalized);
    values.as_mut_slice().iter_mut().for_each(|v| *v = v.sqrt());
    Ok(DistanceMatrix {
        values,
        kind: DistanceKind::Euclidean,
    })
}

/// For every instance: itself followed by its `k` nearest other instances,
/// ordered by distance and then index.
pub fn nearest_neighbors(dist: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = dist.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dist.row(i);
            let cmp = |a: &usize, b: &usize| -> Ordering {
                (row[*a] + 0.0).total_cmp(&(row[*b] + 0.0)).then(a.cmp(b))
            };
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let k = k.min(others.len());
            if k > 0 && k < others.len() {
                others.select_nth_unstable_by(k - 1, cmp);
                others.truncate(k);
            }
            others.sort_unstable_by(cmp);
            others.truncate(k);
            let mut list = Vec::with_capacity(k + 1);
            list.push(i);
            list.extend(others);
            list
        })
        .collect()
}

/// `R(i, k)` for every `i`, sorted ascending. `knn` must hold at least `k + 1`
/// entries per row.
fn reciprocal_sets(knn: &[Vec<usize>], k: usize) -> Vec<Vec<usize>> {
    (0..knn.len())
        .into_par_iter()
        .map(|i| {
            let mut r: Vec<usize> = knn[i][..=k]
                .iter()
                .copied()
                .filter(|&j| knn[j][..=k].contains(&i))
                .collect();
            r.sort_unstable();
            r
        })
        .collect()
}

fn expanded_sets(knn: &[Vec<usize>], k1: usize) -> Vec<Vec<usize>> {
    let full = reciprocal_sets(knn, k1);
    let half = reciprocal_sets(knn, k1 / 2);
    (0..knn.len())
        .into_par_iter()
        .map(|i| {
            let base = &full[i];
            let mut out = base.clone();
            for &q in base {
                let cand = &half[q];
                let overlap = cand.iter().filter(|c| base.binary_search(c).is_ok()).count();
                // |R(q, k1/2) ∩ R(i, k1)| ≥ (2/3)|R(q, k1/2)|, in integers
                if 3 * overlap >= 2 * cand.len() {
                    out.extend_from_slice(cand);
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Expanded k-reciprocal neighbour sets `R*(i, k1)`, each sorted ascending.
pub fn k_reciprocal_sets(dist: &DistanceMatrix, k1: usize) -> Result<Vec<Vec<usize>>> {
    let n = dist.len();
    if k1 < 1 || k1 >= n {
        return Err(invalid(format!("k1 = {k1} must lie in [1, {})", n)));
    }
    let knn = nearest_neighbors(dist.values(), k1);
    Ok(expanded_sets(&knn, k1))
}

/// Sparse weight vector: `(index, weight)` sorted by index.
type SparseRow = Vec<(usize, f64)>;

pub fn jaccard_distance(features: &Matrix, k1: usize, k2: usize) -> Result<DistanceMatrix> {
    let n = features.rows();
    if k1 < 1 || k1 >= n {
        return Err(invalid(format!("k1 = {k1} must lie in [1, {n})")));
    }
    if k2 < 1 || k2 > k1 {
        return Err(invalid(format!("k2 = {k2} must lie in [1, k1 = {k1}]")));
    }
    if let Some((row, col)) = features.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }

    let sq = squared_distances(features, false);
    let knn = nearest_neighbors(&sq, k1);
    let expanded = expanded_sets(&knn, k1);

    let weights: Vec<SparseRow> = expanded
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let w: Vec<f64> = set.iter().map(|&j| (-sq.get(i, j)).exp()).collect();
            let total: f64 = w.iter().sum();
            set.iter().zip(w).map(|(&j, v)| (j, v / total)).collect()
        })
        .collect();

    let weights = if k2 > 1 {
        query_expand(&weights, &knn, k2, n)
    } else {
        weights
    };

    // inverted index: column -> rows with a non-zero weight there
    let mut inverted: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in weights.iter().enumerate() {
        for &(k, v) in row {
            inverted[k].push((i, v));
        }
    }
    let totals: Vec<f64> = weights.iter().map(|r| r.iter().map(|&(_, v)| v).sum()).collect();

    let mut values = Matrix::zeros(n, n);
    values
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, out)| {
            let mut min_sum = vec![0.0; n];
            for &(k, vi) in &weights[i] {
                for &(j, vj) in &inverted[k] {
                    min_sum[j] += vi.min(vj);
                }
            }
            for (j, slot) in out.iter_mut().enumerate() {
                let m = min_sum[j];
                // Σ max = Σ V_i + Σ V_j - Σ min, entry by entry
                let max_sum = totals[i] + totals[j] - m;
                *slot = if max_sum > 0.0 { 1.0 - m / max_sum } else { 1.0 };
            }
        });

    symmetrize(&mut values);
    values
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(DistanceMatrix {
        values,
        kind: DistanceKind::Jaccard,
    })
}

/// Local query expansion: average each weight vector over the instance's
/// `k2` nearest neighbours (itself included).
fn query_expand(weights: &[SparseRow], knn: &[Vec<usize>], k2: usize, n: usize) -> Vec<SparseRow> {
    (0..weights.len())
        .into_par_iter()
        .map(|i| {
            let mut dense = vec![0.0; n];
            let mut touched = Vec::new();
            for &j in &knn[i][..k2] {
                for &(k, v) in &weights[j] {
                    if dense[k] == 0.0 {
                        touched.push(k);
                    }
                    dense[k] += v;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            touched.into_iter().map(|k| (k, dense[k] / k2 as f64)).collect()
        })
        .collect()
}
