//! Retrieval metrics (CMC rank-k, mAP) under the cross-camera protocol, and
//! partition agreement (ARI, NMI) for judging pseudo labels.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureDataset;
use crate::encoder::Encoder;
use crate::error::{invalid, Error, Result};
use crate::labels::ClusterAssignment;
use crate::linalg::{dot, Matrix};
use crate::trainer::EpochObserver;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rank_1: f64,
    pub rank_5: f64,
    pub rank_10: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub num_queries_evaluated: usize,
    /// AP per query, `None` for queries without a valid match.
    #[serde(skip)]
    pub per_query_ap: Vec<Option<f64>>,
}

impl EvalResult {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    /// `key,ap` with an empty `ap` for skipped queries.
    pub fn write_per_query_csv(&self, keys: &[String], path: impl AsRef<Path>) -> Result<()> {
        if keys.len() != self.per_query_ap.len() {
            return Err(Error::Shape("one key per query expected".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["key", "ap"])?;
        for (k, ap) in keys.iter().zip(&self.per_query_ap) {
            w.write_record([k.clone(), ap.map(|a| a.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Identity and camera of every row of one side of the retrieval split.
#[derive(Debug, Clone, Copy)]
pub struct Annotated<'a> {
    pub embeddings: &'a Matrix,
    pub ids: &'a [i64],
    pub cameras: &'a [i64],
}

struct QueryOutcome {
    /// 0-based rank of the first valid match.
    first_hit: usize,
    ap: f64,
}

/// Ranks the gallery for one query by descending cosine similarity, ties by
/// ascending gallery index. Gallery rows with the query's identity and
/// camera are removed before ranking.
fn score_query(q: &[f64], id: i64, cam: i64, gallery: &Annotated<'_>) -> Option<QueryOutcome> {
    let mut ranked: Vec<(f64, usize)> = (0..gallery.ids.len())
        .filter(|&g| !(gallery.ids[g] == id && gallery.cameras[g] == cam))
        // adding 0.0 turns -0.0 into 0.0 so the two tie
        .map(|g| (dot(q, gallery.embeddings.row(g)) + 0.0, g))
        .collect();
    ranked.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut first_hit = None;
    for (rank, &(_, g)) in ranked.iter().enumerate() {
        if gallery.ids[g] == id {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
            first_hit.get_or_insert(rank);
        }
    }
    first_hit.map(|first_hit| QueryOutcome {
        first_hit,
        ap: precision_sum / hits as f64,
    })
}

pub fn evaluate_embeddings(query: Annotated<'_>, gallery: Annotated<'_>) -> Result<EvalResult> {
    if query.embeddings.cols() != gallery.embeddings.cols() {
        return Err(Error::Shape("query and gallery dimensions differ".into()));
    }
    let outcomes: Vec<Option<QueryOutcome>> = (0..query.ids.len())
        .into_par_iter()
        .map(|i| score_query(query.embeddings.row(i), query.ids[i], query.cameras[i], &gallery))
        .collect();
    let valid: Vec<&QueryOutcome> = outcomes.iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::NoValidQuery);
    }
    let n = valid.len() as f64;
    let rank = |k: usize| valid.iter().filter(|o| o.first_hit < k).count() as f64 / n;
    Ok(EvalResult {
        rank_1: rank(1),
        rank_5: rank(5),
        rank_10: rank(10),
        map: valid.iter().map(|o| o.ap).sum::<f64>() / n,
        num_queries_evaluated: valid.len(),
        per_query_ap: outcomes.iter().map(|o| o.as_ref().map(|o| o.ap)).collect(),
    })
}

/// Embeds both sets with `encoder` and scores retrieval.
pub fn evaluate(query: &FeatureDataset, gallery: &FeatureDataset, encoder: &Encoder) -> Result<EvalResult> {
    let q_ids = query
        .true_ids()
        .ok_or_else(|| invalid("query set has no identities"))?;
    let g_ids = gallery
        .true_ids()
        .ok_or_else(|| invalid("gallery set has no identities"))?;
    let q = encoder.embed(query.unlabeled().features())?;
    let g = encoder.embed(gallery.unlabeled().features())?;
    let q_cams = query.unlabeled().camera_labels();
    let g_cams = gallery.unlabeled().camera_labels();
    evaluate_embeddings(
        Annotated {
            embeddings: &q,
            ids: q_ids,
            cameras: &q_cams,
        },
        Annotated {
            embeddings: &g,
            ids: g_ids,
            cameras: &g_cams,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelQuality {
    pub ari: f64,
    pub nmi: f64,
}

/// ARI and NMI (arithmetic normalisation) over the clustered instances.
///
/// Degenerate partitions follow the usual conventions: identical trivial
/// partitions score 1, and an empty clustered set scores 0.
pub fn label_quality(assignment: &ClusterAssignment, true_ids: &[i64]) -> Result<LabelQuality> {
    if assignment.len() != true_ids.len() {
        return Err(Error::Shape(format!(
            "{} labels against {} identities",
            assignment.len(),
            true_ids.len()
        )));
    }
    let mut table: HashMap<(usize, i64), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<i64, usize> = HashMap::new();
    let mut n = 0usize;
    for (i, &t) in true_ids.iter().enumerate() {
        if let Some(c) = assignment.cluster_of(i) {
            *table.entry((c, t)).or_default() += 1;
            *rows.entry(c).or_default() += 1;
            *cols.entry(t).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Ok(LabelQuality { ari: 0.0, nmi: 0.0 });
    }
    let pairs = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let (row_sizes, col_sizes) = (sorted_values(&rows), sorted_values(&cols));
    let mut cells: Vec<usize> = table.values().copied().collect();
    cells.sort_unstable();

    let index: f64 = cells.iter().map(|&x| pairs(x)).sum();
    let a: f64 = row_sizes.iter().map(|&x| pairs(x)).sum();
    let b: f64 = col_sizes.iter().map(|&x| pairs(x)).sum();
    let expected = a * b / pairs(n).max(1.0);
    let max_index = 0.5 * (a + b);
    let ari = if (max_index - expected).abs() < f64::EPSILON {
        1.0
    } else {
        (index - expected) / (max_index - expected)
    };

    let nf = n as f64;
    let entropy = |sizes: &[usize]| -> f64 {
        sizes
            .iter()
            .map(|&s| {
                let p = s as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let (hu, hv) = (entropy(&row_sizes), entropy(&col_sizes));
    let mut keys: Vec<&(usize, i64)> = table.keys().collect();
    keys.sort_unstable();
    let mi: f64 = keys
        .into_iter()
        .map(|key| {
            let nij = table[key] as f64;
            let (ni, nj) = (rows[&key.0] as f64, cols[&key.1] as f64);
            nij / nf * (nf * nij / (ni * nj)).ln()
        })
        .sum();
    let nmi = if hu == 0.0 && hv == 0.0 {
        1.0
    } else {
        (2.0 * mi / (hu + hv)).clamp(0.0, 1.0)
    };
    Ok(LabelQuality { ari, nmi })
}

fn sorted_values<K>(m: &HashMap<K, usize>) -> Vec<usize> {
    let mut v: Vec<usize> = m.values().copied().collect();
    v.sort_unstable();
    v
}

/// Training hook that scores every epoch's pseudo labels against ground
/// truth and, when a query/gallery split is supplied, the held-out mAP.
/// Ground truth stays on this side of the trainer boundary.
pub struct GroundTruthObserver<'a> {
    true_ids: &'a [i64],
    retrieval: Option<(&'a FeatureDataset, &'a FeatureDataset)>,
}

impl<'a> GroundTruthObserver<'a> {
    pub fn new(true_ids: &'a [i64]) -> Self {
        Self {
            true_ids,
            retrieval: None,
        }
    }

    pub fn with_retrieval(mut self, query: &'a FeatureDataset, gallery: &'a FeatureDataset) -> Self {
        self.retrieval = Some((query, gallery));
        self
    }
}

impl EpochObserver for GroundTruthObserver<'_> {
    fn on_clustering(&mut self, _epoch: usize, assignment: &ClusterAssignment) -> Option<LabelQuality> {
        label_quality(assignment, self.true_ids).ok()
    }

    fn on_epoch_end(&mut self, _epoch: usize, encoder: &Encoder) -> Option<f64> {
        let (q, g) = self.retrieval?;
        evaluate(q, g, encoder).ok().map(|r| r.map)
    }
}
