//! Contrastive losses against a memory bank, with exact gradients with
//! respect to the batch embeddings.
//!
//! * [`baseline_loss`]: softmax over every cluster entry.
//! * [`intra_loss`]: softmax restricted to the proxies of the sample's own
//!   camera, each sample weighted by `1 / N_c`.
//! * [`inter_loss`]: pulls a sample towards its cross-camera positive proxies
//!   and away from its hardest negative proxies.
//! * [`total_loss`]: `intra + λ·inter`.
//!
//! Memory entries are constants here; they only move through
//! [`ProxyMemory::update_entry`]. Mined index sets are constants as well.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::memory::ProxyMemory;
use crate::proxy::{hard_negative_set, positive_set, ProxyLabeling};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Batch loss.
    pub value: f64,
    /// d(value)/d(embedding), one row per batch sample.
    pub grad: Matrix,
    /// Unweighted per-sample loss term (0 for non-contributing samples).
    pub terms: Vec<f64>,
    pub contributing: Vec<bool>,
}

impl LossOutput {
    fn empty(batch: usize, dim: usize) -> Self {
        Self {
            value: 0.0,
            grad: Matrix::zeros(batch, dim),
            terms: vec![0.0; batch],
            contributing: vec![false; batch],
        }
    }

    pub fn contributing_count(&self) -> usize {
        self.contributing.iter().filter(|&&c| c).count()
    }
}

/// `log Σ exp(logits) - logits[target]` and the softmax probabilities.
fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let probs = logits.iter().map(|l| (l - lse).exp()).collect();
    (lse - logits[target], probs)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_batch(memory: &ProxyMemory, batch: &Matrix, n: usize) -> Result<()> {
    if batch.cols() != memory.dim() {
        return Err(Error::Shape(format!(
            "batch dimension {} against memory dimension {}",
            batch.cols(),
            memory.dim()
        )));
    }
    if batch.rows() != n {
        return Err(Error::Shape(format!(
            "{} batch rows for {n} labels",
            batch.rows()
        )));
    }
    Ok(())
}

/// Adds `scale · Σ_k coeffs[k] · entry(indices[k])` to `out`.
fn accumulate(out: &mut [f64], memory: &ProxyMemory, indices: &[usize], coeffs: &[f64], scale: f64) {
    for (&k, &c) in indices.iter().zip(coeffs) {
        let w = scale * c;
        if w == 0.0 {
            continue;
        }
        for (o, e) in out.iter_mut().zip(memory.entry(k)) {
            *o += w * e;
        }
    }
}

/// Non-parametric softmax over every memory entry, averaged over the batch.
pub fn baseline_loss(memory: &ProxyMemory, batch: &Matrix, labels: &[usize]) -> Result<LossOutput> {
    check_batch(memory, batch, labels.len())?;
    let b = labels.len();
    let mut out = LossOutput::empty(b, batch.cols());
    if b == 0 {
        return Ok(out);
    }
    let all: Vec<usize> = (0..memory.len()).collect();
    let inv_tau = 1.0 / memory.tau();
    for (s, &y) in labels.iter().enumerate() {
        if y >= memory.len() {
            return Err(Error::InvalidParameter(format!(
                "label {y} out of range for {} entries",
                memory.len()
            )));
        }
        let (term, mut coeffs) = cross_entropy(&memory.scores(batch.row(s)), y);
        coeffs[y] -= 1.0;
        accumulate(out.grad.row_mut(s), memory, &all, &coeffs, inv_tau / b as f64);
        out.terms[s] = term;
        out.contributing[s] = true;
        out.value += term;
    }
    out.value /= b as f64;
    Ok(out)
}

/// Per-camera softmax over the sample's own camera's proxies.
///
/// The batch value is `Σ_s ℓ_s / N_{c_s}`, where `N_c` is the number of
/// clustered images in camera `c`.
pub fn intra_loss(
    memory: &ProxyMemory,
    labeling: &ProxyLabeling,
    batch: &Matrix,
    instances: &[usize],
) -> Result<LossOutput> {
    check_batch(memory, batch, instances.len())?;
    let mut out = LossOutput::empty(instances.len(), batch.cols());
    let inv_tau = 1.0 / memory.tau();
    for (s, &i) in instances.iter().enumerate() {
        let j = labeling.proxy_of(i).ok_or(Error::Outlier(i))?;
        let (camera, local) = labeling.camera_and_local(j);
        let range = labeling.camera_range(camera);
        let x = batch.row(s);
        let indices: Vec<usize> = range.collect();
        let logits: Vec<f64> = indices
            .iter()
            .map(|&k| crate::linalg::dot(memory.entry(k), x) * inv_tau)
            .collect();
        let (term, mut coeffs) = cross_entropy(&logits, local);
        coeffs[local] -= 1.0;
        let weight = 1.0 / labeling.per_camera_image_counts()[camera] as f64;
        accumulate(out.grad.row_mut(s), memory, &indices, &coeffs, weight * inv_tau);
        out.terms[s] = term;
        out.contributing[s] = true;
        out.value += weight * term;
    }
    Ok(out)
}

/// Positive and hard-negative proxy sets of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterSets {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

pub fn mine_inter_sets(
    memory: &ProxyMemory,
    labeling: &ProxyLabeling,
    batch: &Matrix,
    instances: &[usize],
    k_hard: usize,
) -> Result<Vec<InterSets>> {
    check_batch(memory, batch, instances.len())?;
    instances
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            Ok(InterSets {
                positives: positive_set(labeling, i)?,
                negatives: hard_negative_set(labeling, memory, batch.row(s), i, k_hard)?,
            })
        })
        .collect()
}

/// Inter-camera loss with precomputed index sets. Samples with no positive
/// proxy contribute nothing; the value is the mean over the others.
pub fn inter_loss_with_sets(memory: &ProxyMemory, batch: &Matrix, sets: &[InterSets]) -> Result<LossOutput> {
    check_batch(memory, batch, sets.len())?;
    let mut out = LossOutput::empty(sets.len(), batch.cols());
    let inv_tau = 1.0 / memory.tau();
    for (s, set) in sets.iter().enumerate() {
        if set.positives.is_empty() {
            continue;
        }
        let x = batch.row(s);
        let indices: Vec<usize> = set.positives.iter().chain(&set.negatives).copied().collect();
        let logits: Vec<f64> = indices
            .iter()
            .map(|&k| crate::linalg::dot(memory.entry(k), x) * inv_tau)
            .collect();
        let lse = log_sum_exp(&logits);
        let np = set.positives.len();
        let mean_pos = logits[..np].iter().sum::<f64>() / np as f64;
        // -(1/|P|) Σ_p log(S_p / Σ S) = lse - mean_p(logit_p)
        let mut coeffs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        for c in &mut coeffs[..np] {
            *c -= 1.0 / np as f64;
        }
        accumulate(out.grad.row_mut(s), memory, &indices, &coeffs, inv_tau);
        out.terms[s] = lse - mean_pos;
        out.contributing[s] = true;
    }
    let n = out.contributing_count();
    if n > 0 {
        out.value = out.terms.iter().sum::<f64>() / n as f64;
        out.grad.scale(1.0 / n as f64);
    }
    Ok(out)
}

pub fn inter_loss(
    memory: &ProxyMemory,
    labeling: &ProxyLabeling,
    batch: &Matrix,
    instances: &[usize],
    k_hard: usize,
) -> Result<LossOutput> {
    let sets = mine_inter_sets(memory, labeling, batch, instances, k_hard)?;
    inter_loss_with_sets(memory, batch, &sets)
}

/// `intra + λ·inter`, values and gradients alike.
pub fn total_loss(intra: &LossOutput, inter: &LossOutput, lambda: f64) -> Result<LossOutput> {
    if intra.grad.rows() != inter.grad.rows() || intra.grad.cols() != inter.grad.cols() {
        return Err(Error::Shape(format!(
            "intra gradient {}x{} vs inter gradient {}x{}",
            intra.grad.rows(),
            intra.grad.cols(),
            inter.grad.rows(),
            inter.grad.cols()
        )));
    }
    let mut grad = intra.grad.clone();
    grad.add_scaled(&inter.grad, lambda)?;
    Ok(LossOutput {
        value: intra.value + lambda * inter.value,
        grad,
        terms: intra
            .terms
            .iter()
            .zip(&inter.terms)
            .map(|(a, b)| a + lambda * b)
            .collect(),
        contributing: intra
            .contributing
            .iter()
            .zip(&inter.contributing)
            .map(|(a, b)| *a || *b)
            .collect(),
    })
}
