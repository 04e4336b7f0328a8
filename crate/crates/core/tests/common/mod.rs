//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cap_reid::eval::Annotated;
use cap_reid::losses::{
    baseline_loss, inter_loss_with_sets, intra_loss, mine_inter_sets, total_loss, InterSets,
};
use cap_reid::{
    split_by_camera, ClusterAssignment, Encoder, Matrix, ProxyLabeling, ProxyMemory, RandomSeed, UnlabeledSet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    RandomSeed(seed).rng()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        n,
        d,
        (0..n * d).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let mut m = random_matrix(rng, n, d, 1.0);
    for r in 0..n {
        let row = m.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    m
}

/// Points around `blobs` random centres in `[0, spread]^d`, plus uniform noise.
pub fn blob_points(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    blobs: usize,
    spread: f64,
    sigma: f64,
) -> Matrix {
    let centres: Vec<Vec<f64>> = (0..blobs)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..spread)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        if i % 10 == 9 {
            data.extend((0..d).map(|_| rng.random_range(0.0..spread)));
        } else {
            let c = &centres[rng.random_range(0..blobs)];
            data.extend(c.iter().map(|x| x + rng.random_range(-sigma..sigma)));
        }
    }
    Matrix::from_vec(n, d, data).unwrap()
}

pub fn scalar_distances(features: &Matrix) -> Matrix {
    let n = features.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..features.cols() {
                let d = features.get(i, k) - features.get(j, k);
                s += d * d;
            }
            out.set(i, j, s.sqrt());
        }
    }
    out
}

// ---------------------------------------------------------------- DBSCAN

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Union-find over core points; border points join the earliest-numbered
/// cluster among their core neighbours. Clusters are numbered by their
/// smallest core index.
pub fn naive_dbscan(dist: &Matrix, eps: f64, min_pts: usize) -> Vec<i64> {
    let n = dist.rows();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| dist.get(i, j) <= eps).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && dist.get(i, j) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut rank_of_root = BTreeMap::new();
    for (i, &is_core) in core.iter().enumerate() {
        if is_core {
            let r = find(&mut parent, i);
            let next = rank_of_root.len() as i64;
            rank_of_root.entry(r).or_insert(next);
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                rank_of_root[&find(&mut parent, i)]
            } else {
                (0..n)
                    .filter(|&j| core[j] && dist.get(i, j) <= eps)
                    .map(|j| rank_of_root[&find(&mut parent, j)])
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Equal up to a bijective relabelling, with outliers fixed.
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut bwd = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == -1) != (y == -1) {
            return false;
        }
        if x == -1 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

// --------------------------------------------------------------- Jaccard

fn sorted_neighbours(sq: &Matrix, i: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..sq.rows()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| sq.get(i, a).partial_cmp(&sq.get(i, b)).unwrap().then(a.cmp(&b)));
    let mut out = vec![i];
    out.extend(others);
    out
}

fn mutual(lists: &[Vec<usize>], i: usize, k: usize) -> BTreeSet<usize> {
    lists[i][..=k]
        .iter()
        .copied()
        .filter(|&j| lists[j][..=k].contains(&i))
        .collect()
}

/// Expanded reciprocal sets and the Jaccard matrix, both computed densely
/// from explicitly materialised sets.
pub fn naive_reciprocal_sets(features: &Matrix, k1: usize) -> Vec<BTreeSet<usize>> {
    let n = features.rows();
    let d = scalar_distances(features);
    let mut sq = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sq.set(i, j, d.get(i, j) * d.get(i, j));
        }
    }
    naive_expanded(&sq, k1)
}

fn naive_expanded(sq: &Matrix, k1: usize) -> Vec<BTreeSet<usize>> {
    let n = sq.rows();
    let lists: Vec<Vec<usize>> = (0..n).map(|i| sorted_neighbours(sq, i)).collect();
    (0..n)
        .map(|i| {
            let r = mutual(&lists, i, k1);
            let mut star = r.clone();
            for &q in &r {
                let h = mutual(&lists, q, k1 / 2);
                let overlap = h.intersection(&r).count() as f64;
                if overlap >= 2.0 / 3.0 * h.len() as f64 {
                    star.extend(h);
                }
            }
            star
        })
        .collect()
}

pub fn naive_jaccard(features: &Matrix, k1: usize, k2: usize) -> Matrix {
    let n = features.rows();
    let mut sq = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..features.cols() {
                s += (features.get(i, k) - features.get(j, k)).powi(2);
            }
            sq.set(i, j, s);
        }
    }
    let lists: Vec<Vec<usize>> = (0..n).map(|i| sorted_neighbours(&sq, i)).collect();
    let star = naive_expanded(&sq, k1);
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        let total: f64 = star[i].iter().map(|&j| (-sq.get(i, j)).exp()).sum();
        for &j in &star[i] {
            v[i][j] = (-sq.get(i, j)).exp() / total;
        }
    }
    let mut expanded = vec![vec![0.0; n]; n];
    for i in 0..n {
        for &j in &lists[i][..k2] {
            for (e, w) in expanded[i].iter_mut().zip(&v[j]) {
                *e += w / k2 as f64;
            }
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (a, b) in expanded[i].iter().zip(&expanded[j]) {
                lo += a.min(*b);
                hi += a.max(*b);
            }
            out.set(i, j, 1.0 - lo / hi);
        }
    }
    for i in 0..n {
        out.set(i, i, 0.0);
        for j in (i + 1)..n {
            let m = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, m.clamp(0.0, 1.0));
            out.set(j, i, m.clamp(0.0, 1.0));
        }
    }
    out
}

// ------------------------------------------------------------ retrieval

#[derive(Debug, PartialEq)]
pub struct NaiveEval {
    pub rank: [f64; 3],
    pub map: f64,
    pub evaluated: usize,
}

/// Full stable sort per query, precision counted from scratch at every
/// relevant position.
pub fn naive_evaluate(q: Annotated<'_>, g: Annotated<'_>) -> Option<NaiveEval> {
    let mut hits = [0usize; 3];
    let mut ap_sum = 0.0;
    let mut evaluated = 0;
    for i in 0..q.ids.len() {
        let mut order: Vec<usize> = (0..g.ids.len()).collect();
        let sim = |j: usize| -> f64 {
            (0..q.embeddings.cols())
                .map(|k| q.embeddings.get(i, k) * g.embeddings.get(j, k))
                .sum()
        };
        order.sort_by(|&a, &b| sim(b).partial_cmp(&sim(a)).unwrap());
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&j| !(g.ids[j] == q.ids[i] && g.cameras[j] == q.cameras[i]))
            .collect();
        let relevant: Vec<bool> = kept.iter().map(|&j| g.ids[j] == q.ids[i]).collect();
        let total = relevant.iter().filter(|&&r| r).count();
        if total == 0 {
            continue;
        }
        evaluated += 1;
        let first = relevant.iter().position(|&r| r).unwrap();
        for (slot, k) in [1, 5, 10].iter().enumerate() {
            if first < *k {
                hits[slot] += 1;
            }
        }
        let mut ap = 0.0;
        for (pos, &r) in relevant.iter().enumerate() {
            if r {
                let found = relevant[..=pos].iter().filter(|&&x| x).count();
                ap += found as f64 / (pos + 1) as f64;
            }
        }
        ap_sum += ap / total as f64;
    }
    (evaluated > 0).then(|| NaiveEval {
        rank: hits.map(|h| h as f64 / evaluated as f64),
        map: ap_sum / evaluated as f64,
        evaluated,
    })
}

// ------------------------------------------------------- ARI / NMI

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Dense contingency table over non-outlier rows.
pub fn naive_ari_nmi(labels: &[i64], truth: &[i64]) -> (f64, f64) {
    let rows: Vec<(i64, i64)> = labels
        .iter()
        .zip(truth)
        .filter(|(l, _)| **l != -1)
        .map(|(l, t)| (*l, *t))
        .collect();
    let us: Vec<i64> = rows
        .iter()
        .map(|r| r.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vs: Vec<i64> = rows
        .iter()
        .map(|r| r.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut table = vec![vec![0.0; vs.len()]; us.len()];
    for (u, v) in &rows {
        let a = us.binary_search(u).unwrap();
        let b = vs.binary_search(v).unwrap();
        table[a][b] += 1.0;
    }
    let n = rows.len() as f64;
    let a: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let b: Vec<f64> = (0..vs.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let sum_ij: f64 = table.iter().flatten().map(|&x| comb2(x)).sum();
    let sum_a: f64 = a.iter().map(|&x| comb2(x)).sum();
    let sum_b: f64 = b.iter().map(|&x| comb2(x)).sum();
    let expected = sum_a * sum_b / comb2(n);
    let ari = (sum_ij - expected) / (0.5 * (sum_a + sum_b) - expected);
    let h = |xs: &[f64]| -> f64 {
        xs.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -(x / n) * (x / n).ln())
            .sum()
    };
    let mut mi = 0.0;
    for i in 0..us.len() {
        for j in 0..vs.len() {
            let nij = table[i][j];
            if nij > 0.0 {
                mi += nij / n * ((n * nij) / (a[i] * b[j])).ln();
            }
        }
    }
    let nmi = 2.0 * mi / (h(&a) + h(&b));
    (ari, nmi)
}

// ----------------------------------------------------------- gradients

/// Largest entrywise relative error, each entry scaled by
/// `max(|a|, |n|, 1e-3 · max_k |a_k|)` so that near-zero entries are judged
/// against the gradient's overall magnitude.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub const FD_STEP: f64 = 1e-5;

pub fn central_differences(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + FD_STEP;
            let up = f(&probe);
            probe[k] = x[k] - FD_STEP;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Labeling with `clusters` clusters spread over random non-empty camera
/// subsets of `cams` cameras, `per` instances per (cluster, camera) cell.
pub fn random_labeling(
    rng: &mut ChaCha8Rng,
    clusters: usize,
    cams: usize,
    per: usize,
    d: usize,
) -> (UnlabeledSet, ProxyLabeling) {
    let mut labels = Vec::new();
    let mut cameras = Vec::new();
    for y in 0..clusters {
        let mut present: Vec<bool> = (0..cams).map(|_| rng.random_bool(0.7)).collect();
        if !present.contains(&true) {
            present[rng.random_range(0..cams)] = true;
        }
        for (c, &p) in present.iter().enumerate() {
            if p {
                for _ in 0..per {
                    labels.push(y as i64);
                    cameras.push(c as i64 + 1);
                }
            }
        }
    }
    let n = labels.len();
    let set = UnlabeledSet::with_index_keys(random_unit_rows(rng, n, d), &cameras).unwrap();
    let labeling = split_by_camera(&ClusterAssignment::new(labels).unwrap(), &set).unwrap();
    (set, labeling)
}

pub fn matrix_from(flat: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, flat.to_vec()).unwrap()
}

/// Baseline softmax: B=4, Y=5, d=8.
pub fn baseline_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, y, d) = (4, 5, 8);
    let memory = ProxyMemory::from_entries(random_unit_rows(&mut r, y, d), 0.2, 0.07).unwrap();
    let batch = random_unit_rows(&mut r, b, d);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..y)).collect();
    let analytic = baseline_loss(&memory, &batch, &labels).unwrap().grad;
    let numeric = central_differences(batch.as_slice(), |x| {
        baseline_loss(&memory, &matrix_from(x, b, d), &labels)
            .unwrap()
            .value
    });
    max_relative_error(analytic.as_slice(), &numeric)
}

/// Intra-camera loss: 2 cameras × 3 proxies, B=6.
pub fn intra_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = 8;
    let mut labels = Vec::new();
    let mut cameras = Vec::new();
    for y in 0..3 {
        for c in 1..=2 {
            for _ in 0..r.random_range(1..4) {
                labels.push(y);
                cameras.push(c);
            }
        }
    }
    let n = labels.len();
    let set = UnlabeledSet::with_index_keys(random_unit_rows(&mut r, n, d), &cameras).unwrap();
    let labeling = split_by_camera(&ClusterAssignment::new(labels).unwrap(), &set).unwrap();
    let memory = ProxyMemory::init(set.features(), &labeling, 0.2, 0.07).unwrap();
    let instances: Vec<usize> = (0..6).map(|_| r.random_range(0..n)).collect();
    let batch = random_unit_rows(&mut r, 6, d);
    let analytic = intra_loss(&memory, &labeling, &batch, &instances).unwrap().grad;
    let numeric = central_differences(batch.as_slice(), |x| {
        intra_loss(&memory, &labeling, &matrix_from(x, 6, d), &instances)
            .unwrap()
            .value
    });
    max_relative_error(analytic.as_slice(), &numeric)
}

/// Inter-camera loss: C=3, 4 clusters, K_hard=5, B=8, index sets frozen.
pub fn inter_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = 8;
    let (set, labeling) = loop {
        let (s, l) = random_labeling(&mut r, 4, 3, 2, d);
        // at least one multi-camera cluster so some sample contributes
        if (0..l.num_clusters()).any(|y| l.proxies_of_cluster(y).len() > 1) {
            break (s, l);
        }
    };
    let memory = ProxyMemory::init(set.features(), &labeling, 0.2, 0.07).unwrap();
    let instances: Vec<usize> = (0..8).map(|_| r.random_range(0..set.len())).collect();
    let batch = random_unit_rows(&mut r, 8, d);
    let sets = mine_inter_sets(&memory, &labeling, &batch, &instances, 5).unwrap();
    let analytic = inter_loss_with_sets(&memory, &batch, &sets).unwrap().grad;
    let numeric = central_differences(batch.as_slice(), |x| {
        inter_loss_with_sets(&memory, &matrix_from(x, 8, d), &sets)
            .unwrap()
            .value
    });
    max_relative_error(analytic.as_slice(), &numeric)
}

/// Encoder parameters through normalisation into `intra + 0.5·inter`, with
/// labels, memory and mined sets frozen. Odd seeds add a hidden layer.
pub fn composed_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d_in, d_out) = (6, 5);
    let hidden = (seed % 2 == 1).then_some(4);
    let (set, labeling) = random_labeling(&mut r, 4, 3, 2, d_out);
    let memory = ProxyMemory::init(set.features(), &labeling, 0.2, 0.07).unwrap();
    let b = 8;
    let instances: Vec<usize> = (0..b).map(|_| r.random_range(0..set.len())).collect();
    let x = random_matrix(&mut r, b, d_in, 1.0);
    let mut encoder = Encoder::random(d_in, d_out, hidden, RandomSeed(seed));
    let (emb, cache) = encoder.forward(&x).unwrap();
    let sets: Vec<InterSets> = mine_inter_sets(&memory, &labeling, &emb, &instances, 5).unwrap();
    let loss_of = |emb: &Matrix| {
        let intra = intra_loss(&memory, &labeling, emb, &instances).unwrap();
        let inter = inter_loss_with_sets(&memory, emb, &sets).unwrap();
        total_loss(&intra, &inter, 0.5).unwrap()
    };
    let (analytic, _) = encoder.backward(&cache, &loss_of(&emb).grad).unwrap();
    let params = encoder.params();
    let numeric = central_differences(&params, |p| {
        encoder.set_params(p).unwrap();
        loss_of(&encoder.embed(&x).unwrap()).value
    });
    max_relative_error(&analytic, &numeric)
}
