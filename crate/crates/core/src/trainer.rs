//! The alternating training loop: re-cluster the current embeddings at the
//! start of every epoch, rebuild proxies and memory, then run one pass of
//! contrastive updates over a freshly sampled batch plan.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clustering::{dbscan, filter_reliable};
use crate::data::{RandomSeed, UnlabeledSet};
use crate::encoder::Encoder;
use crate::error::{invalid, Error, Result};
use crate::eval::LabelQuality;
use crate::labels::ClusterAssignment;
use crate::linalg::Matrix;
use crate::losses::{baseline_loss, inter_loss, intra_loss, total_loss, LossOutput};
use crate::memory::ProxyMemory;
use crate::metric::jaccard_distance;
use crate::optim::{Optimizer, OptimizerKind};
use crate::proxy::{split_by_camera, ProxyLabeling};
use crate::sampler::{plan_epoch, SamplingStrategy};

const SEED_ENCODER: u64 = 1;
const SEED_JITTER: u64 = 2;
const SEED_SAMPLER: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Softmax over camera-agnostic cluster entries.
    Baseline,
    /// Intra-camera loss only, every epoch.
    Intra,
    /// Inter-camera loss only, every epoch.
    Inter,
    /// Intra-camera loss, plus `λ·inter` after the intra-only warm phase.
    IntraInter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub intra_only_epochs: usize,
    pub warmup_epochs: usize,
    pub lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub mu: f64,
    pub tau: f64,
    pub lambda: f64,
    #[serde(rename = "K_hard")]
    pub k_hard: usize,
    pub eps_dbscan: f64,
    pub min_pts: usize,
    pub min_cluster_size: usize,
    pub k1: usize,
    pub k2: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: RandomSeed,
    pub optimizer: OptimizerKind,
    pub objective: Objective,
    pub sampling: SamplingStrategy,
    /// Output width; `None` keeps the input width.
    pub embed_dim: Option<usize>,
    /// Width of an optional `tanh` hidden layer.
    pub hidden_dim: Option<usize>,
    /// Standard deviation of Gaussian noise added to batch inputs.
    pub jitter_sigma: f64,
    /// Renormalise memory entries after each momentum update.
    pub normalize_memory: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            intra_only_epochs: 5,
            warmup_epochs: 10,
            lr: 0.00035,
            lr_decay_every: 20,
            lr_decay_factor: 0.1,
            mu: 0.2,
            tau: 0.07,
            lambda: 0.5,
            k_hard: 50,
            eps_dbscan: 0.5,
            min_pts: 4,
            min_cluster_size: 2,
            k1: 30,
            k2: 6,
            p: 8,
            k: 4,
            seed: RandomSeed(0),
            optimizer: OptimizerKind::Adam,
            objective: Objective::IntraInter,
            sampling: SamplingStrategy::ProxyBalanced,
            embed_dim: None,
            hidden_dim: None,
            jitter_sigma: 0.0,
            normalize_memory: true,
        }
    }
}

impl TrainConfig {
    /// The camera-agnostic reference pipeline: cluster-level softmax with
    /// class-balanced batches.
    pub fn baseline() -> Self {
        Self {
            objective: Objective::Baseline,
            sampling: SamplingStrategy::ClassBalanced,
            ..Self::default()
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("tau", self.tau),
            ("eps_dbscan", self.eps_dbscan),
            ("lr_decay_factor", self.lr_decay_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} = {v} must be positive")));
            }
        }
        let counts = [
            ("warmup_epochs", self.warmup_epochs),
            ("lr_decay_every", self.lr_decay_every),
            ("min_pts", self.min_pts),
            ("min_cluster_size", self.min_cluster_size),
            ("k1", self.k1),
            ("k2", self.k2),
            ("P", self.p),
            ("K", self.k),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        if self.k2 > self.k1 {
            return Err(invalid(format!("k2 = {} exceeds k1 = {}", self.k2, self.k1)));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(invalid(format!("mu = {} outside [0, 1]", self.mu)));
        }
        if !(self.lambda >= 0.0 && self.jitter_sigma >= 0.0) {
            return Err(invalid("lambda and jitter_sigma must be non-negative"));
        }
        if self.intra_only_epochs > self.epochs {
            return Err(invalid("intra_only_epochs exceeds epochs"));
        }
        if matches!(self.embed_dim, Some(0)) || matches!(self.hidden_dim, Some(0)) {
            return Err(invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// Step decay from the base rate with a linear warmup ramp in front.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.lr_decay_every) as i32;
        let base = self.lr * self.lr_decay_factor.powi(decays);
        if epoch < self.warmup_epochs {
            base * (epoch + 1) as f64 / self.warmup_epochs as f64
        } else {
            base
        }
    }

    fn inter_active(&self, epoch: usize) -> bool {
        match self.objective {
            Objective::Inter => true,
            Objective::IntraInter => epoch >= self.intra_only_epochs,
            Objective::Baseline | Objective::Intra => false,
        }
    }

    fn initial_encoder(&self, d_in: usize) -> Encoder {
        let d_out = self.embed_dim.unwrap_or(d_in);
        if self.hidden_dim.is_none() && d_out == d_in {
            Encoder::identity(d_in)
        } else {
            Encoder::random(d_in, d_out, self.hidden_dim, self.seed.derive(SEED_ENCODER))
        }
    }
}

pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr_at(epoch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub num_clusters: usize,
    pub num_proxies: usize,
    pub num_outliers: usize,
    pub num_batches: usize,
    /// Mean optimised batch loss.
    pub loss: f64,
    /// Mean unweighted intra-camera term per sample, when that loss ran.
    pub intra_loss: Option<f64>,
    /// Mean inter-camera term per contributing sample, when that loss ran.
    pub inter_loss: Option<f64>,
    /// Intra-camera objective over every clustered instance, measured after
    /// the epoch's updates against the epoch's labels.
    pub intra_objective: Option<f64>,
    pub lr: f64,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    /// Held-out mAP reported by the observer after the epoch.
    pub eval_map: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// One row per epoch. Timing stays out of this file so that identical
    /// runs produce identical bytes; see [`Self::write_summary`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_rows(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_rows(&mut w)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record([
            "epoch",
            "num_clusters",
            "num_proxies",
            "num_outliers",
            "num_batches",
            "loss",
            "intra_loss",
            "inter_loss",
            "intra_objective",
            "lr",
            "ari",
            "nmi",
            "eval_map",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.num_clusters.to_string(),
                r.num_proxies.to_string(),
                r.num_outliers.to_string(),
                r.num_batches.to_string(),
                r.loss.to_string(),
                opt(r.intra_loss),
                opt(r.inter_loss),
                opt(r.intra_objective),
                r.lr.to_string(),
                opt(r.ari),
                opt(r.nmi),
                opt(r.eval_map),
            ])?;
        }
        Ok(())
    }

    /// JSON with the full records (timings included) and run totals.
    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            epochs: usize,
            total_seconds: f64,
            final_epoch: Option<&'a EpochRecord>,
            records: &'a [EpochRecord],
        }
        let summary = Summary {
            epochs: self.len(),
            total_seconds: self.records.iter().map(|r| r.seconds).sum(),
            final_epoch: self.last(),
            records: &self.records,
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &summary)?;
        Ok(())
    }
}

/// Hooks called by the training loop. The trainer never sees ground truth;
/// an observer that owns it can score each epoch from the outside.
pub trait EpochObserver {
    fn on_clustering(&mut self, _epoch: usize, _assignment: &ClusterAssignment) -> Option<LabelQuality> {
        None
    }

    /// Returns an optional held-out mAP for the report.
    fn on_epoch_end(&mut self, _epoch: usize, _encoder: &Encoder) -> Option<f64> {
        None
    }
}

/// Observer that records nothing.
pub struct NoObserver;

impl EpochObserver for NoObserver {}

/// Pseudo labels of one epoch.
#[derive(Debug, Clone)]
pub struct EpochLabels {
    pub features: Matrix,
    pub assignment: ClusterAssignment,
    pub labeling: ProxyLabeling,
}

/// Embed, Jaccard distance, DBSCAN, reliability filter, camera split.
///
/// `k1` and `k2` are capped at `N - 1` so that small datasets still cluster.
pub fn build_labels(set: &UnlabeledSet, encoder: &Encoder, config: &TrainConfig) -> Result<EpochLabels> {
    let features = encoder.embed(set.features())?;
    let n = set.len();
    if n < 2 {
        return Err(invalid("at least two instances are needed to cluster"));
    }
    let k1 = config.k1.min(n - 1);
    let k2 = config.k2.min(k1);
    let dist = jaccard_distance(&features, k1, k2)?;
    let raw = dbscan(&dist, config.eps_dbscan, config.min_pts)?;
    let assignment = filter_reliable(&raw, config.min_cluster_size);
    let labeling = split_by_camera(&assignment, set)?;
    Ok(EpochLabels {
        features,
        assignment,
        labeling,
    })
}

pub fn run_training(set: &UnlabeledSet, config: &TrainConfig) -> Result<(Encoder, TrainReport)> {
    run_training_with(set, config, &mut NoObserver)
}

pub fn run_training_with(
    set: &UnlabeledSet,
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<(Encoder, TrainReport)> {
    config.validate()?;
    let mut encoder = config.initial_encoder(set.dim());
    let mut optimizer = Optimizer::new(config.optimizer, encoder.num_params());
    let mut jitter_rng = config.seed.derive(SEED_JITTER).rng();
    let jitter =
        (config.jitter_sigma > 0.0).then(|| Normal::new(0.0, config.jitter_sigma).expect("validated sigma"));
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let labels = build_labels(set, &encoder, config)?;
        if labels.assignment.num_clusters() == 0 {
            return Err(Error::DegenerateClustering { epoch });
        }
        let quality = observer.on_clustering(epoch, &labels.assignment);
        let labeling = &labels.labeling;

        let baseline = config.objective == Objective::Baseline;
        let mut memory = if baseline {
            ProxyMemory::init_clusters(&labels.features, labeling, config.mu, config.tau)?
        } else {
            ProxyMemory::init(&labels.features, labeling, config.mu, config.tau)?
        }
        .with_renormalization(config.normalize_memory);

        let groups = match config.sampling {
            SamplingStrategy::ClassBalanced => labeling.num_clusters(),
            _ => labeling.num_proxies(),
        };
        let p = config.p.min(groups);
        let plan = plan_epoch(
            labeling,
            p,
            config.k,
            config.sampling,
            config.seed.derive(SEED_SAMPLER + epoch as u64),
        )?;

        let lr = config.lr_at(epoch);
        let use_inter = config.inter_active(epoch);
        let use_intra = matches!(config.objective, Objective::Intra | Objective::IntraInter);
        let mut loss_sum = 0.0;
        let (mut intra_sum, mut intra_n) = (0.0, 0usize);
        let (mut inter_sum, mut inter_n) = (0.0, 0usize);

        for (b, batch) in plan.batches.iter().enumerate() {
            let mut x = set.features().select_rows(batch);
            if let Some(noise) = &jitter {
                x.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v += noise.sample(&mut jitter_rng));
            }
            let (emb, cache) = encoder.forward(&x)?;

            let loss = if baseline {
                let targets: Vec<usize> = batch
                    .iter()
                    .map(|&i| labeling.cluster_of(i).ok_or(Error::Outlier(i)))
                    .collect::<Result<_>>()?;
                baseline_loss(&memory, &emb, &targets)?
            } else {
                let intra = if use_intra {
                    let out = intra_loss(&memory, labeling, &emb, batch)?;
                    intra_sum += out.terms.iter().sum::<f64>();
                    intra_n += out.terms.len();
                    Some(out)
                } else {
                    None
                };
                let inter = if use_inter {
                    let out = inter_loss(&memory, labeling, &emb, batch, config.k_hard)?;
                    inter_sum += out.terms.iter().sum::<f64>();
                    inter_n += out.contributing_count();
                    Some(out)
                } else {
                    None
                };
                combine(intra, inter, config.lambda, emb.rows(), emb.cols())?
            };
            if !loss.value.is_finite() || loss.grad.find_non_finite().is_some() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss.value;

            let (grads, _) = encoder.backward(&cache, &loss.grad)?;
            let mut params = encoder.params();
            optimizer.step(&mut params, &grads, lr)?;
            encoder.set_params(&params)?;

            for (s, &i) in batch.iter().enumerate() {
                let slot = if baseline {
                    labeling.cluster_of(i)
                } else {
                    labeling.proxy_of(i)
                }
                .ok_or(Error::Outlier(i))?;
                memory.update_entry(slot, emb.row(s))?;
            }
        }

        let intra_objective = if baseline {
            None
        } else {
            Some(full_intra_objective(set, &encoder, labeling, config)?)
        };
        let eval_map = observer.on_epoch_end(epoch, &encoder);
        let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
        records.push(EpochRecord {
            epoch,
            num_clusters: labels.assignment.num_clusters(),
            num_proxies: labeling.num_proxies(),
            num_outliers: labels.assignment.num_outliers(),
            num_batches: plan.len(),
            loss: loss_sum / plan.len().max(1) as f64,
            intra_loss: if use_intra { mean(intra_sum, intra_n) } else { None },
            inter_loss: if use_inter {
                Some(mean(inter_sum, inter_n).unwrap_or(0.0))
            } else {
                None
            },
            intra_objective,
            lr,
            ari: quality.map(|q| q.ari),
            nmi: quality.map(|q| q.nmi),
            eval_map,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((encoder, TrainReport { records }))
}

/// Intra-camera loss summed over all clustered instances, with a memory
/// built from the current encoder.
pub fn full_intra_objective(
    set: &UnlabeledSet,
    encoder: &Encoder,
    labeling: &ProxyLabeling,
    config: &TrainConfig,
) -> Result<f64> {
    let features = encoder.embed(set.features())?;
    let memory = ProxyMemory::init(&features, labeling, config.mu, config.tau)?;
    let clustered: Vec<usize> = (0..set.len())
        .filter(|&i| labeling.proxy_of(i).is_some())
        .collect();
    let batch = features.select_rows(&clustered);
    Ok(intra_loss(&memory, labeling, &batch, &clustered)?.value)
}

fn combine(
    intra: Option<LossOutput>,
    inter: Option<LossOutput>,
    lambda: f64,
    rows: usize,
    cols: usize,
) -> Result<LossOutput> {
    match (intra, inter) {
        (Some(a), Some(e)) => total_loss(&a, &e, lambda),
        (Some(a), None) => Ok(a),
        (None, Some(e)) => Ok(e),
        (None, None) => Err(Error::Shape(format!("no loss active for a {rows}x{cols} batch"))),
    }
}
