//! Synthetic identities seen through shifted cameras.
//!
//! Every identity has a centre on a sphere and every camera adds one fixed
//! offset to everything it sees, so images of one identity taken by the same
//! camera sit closer to each other than to the same identity elsewhere.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataFormat, FeatureDataset, RandomSeed, UnlabeledSet};
use crate::error::{invalid, Result};
use crate::linalg::{normalize_in_place, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_ids: usize,
    pub num_cameras: usize,
    pub min_images: usize,
    pub max_images: usize,
    pub d_in: usize,
    /// Typical distance between two identity centres.
    pub id_separation: f64,
    /// Length of every camera's offset vector.
    pub camera_shift: f64,
    /// Per-coordinate standard deviation of instance noise.
    pub noise_sigma: f64,
    pub missing_camera_prob: f64,
    /// Per-camera override of `missing_camera_prob`.
    pub camera_missing_probs: Option<Vec<f64>>,
    /// Share of identities used for training; the rest form query/gallery.
    pub train_id_fraction: f64,
    pub seed: RandomSeed,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_ids: 100,
            num_cameras: 4,
            min_images: 8,
            max_images: 16,
            d_in: 64,
            id_separation: 1.0,
            camera_shift: 0.5,
            noise_sigma: 0.08,
            missing_camera_prob: 0.0,
            camera_missing_probs: None,
            train_id_fraction: 0.5,
            seed: RandomSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    pub train: FeatureDataset,
    pub query: FeatureDataset,
    pub gallery: FeatureDataset,
}

impl SynthSplit {
    /// Writes `train`, `query` and `gallery` files into `dir`; returns their
    /// paths in that order.
    pub fn save(&self, dir: impl AsRef<Path>, format: DataFormat) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir.as_ref())?;
        let ext = match format {
            DataFormat::Csv => "csv",
            DataFormat::Binary => "bin",
        };
        let paths = ["train", "query", "gallery"].map(|n| dir.as_ref().join(format!("{n}.{ext}")));
        self.train.save(&paths[0], format)?;
        self.query.save(&paths[1], format)?;
        self.gallery.save(&paths[2], format)?;
        Ok(paths)
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_ids < 2 || self.num_cameras < 1 || self.d_in < 2 {
            return Err(invalid("need at least 2 identities, 1 camera and 2 dimensions"));
        }
        if self.min_images == 0 || self.min_images > self.max_images {
            return Err(invalid("image counts need 1 <= min_images <= max_images"));
        }
        for v in [self.id_separation, self.camera_shift, self.noise_sigma] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("scales must be finite and non-negative"));
            }
        }
        let probs = self.missing_probs();
        if probs.len() != self.num_cameras || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid(
                "missing-camera probabilities must be in [0, 1], one per camera",
            ));
        }
        if !(0.0..=1.0).contains(&self.train_id_fraction) {
            return Err(invalid("train_id_fraction outside [0, 1]"));
        }
        Ok(())
    }

    fn missing_probs(&self) -> Vec<f64> {
        self.camera_missing_probs
            .clone()
            .unwrap_or_else(|| vec![self.missing_camera_prob; self.num_cameras])
    }
}

fn random_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if normalize_in_place(&mut v) > 0.0 {
            return v;
        }
    }
}

struct Instance {
    id: usize,
    camera: usize,
    key: String,
    feature: Vec<f64>,
}

fn sample_instances<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<Vec<Instance>> {
    let d = spec.d_in;
    // independent random directions in d dimensions are close to orthogonal,
    // so radius r puts centres about r·√2 apart
    let radius = spec.id_separation / std::f64::consts::SQRT_2;
    let centers: Vec<Vec<f64>> = (0..spec.num_ids)
        .map(|_| random_direction(d, rng).into_iter().map(|x| x * radius).collect())
        .collect();
    let offsets: Vec<Vec<f64>> = (0..spec.num_cameras)
        .map(|_| {
            random_direction(d, rng)
                .into_iter()
                .map(|x| x * spec.camera_shift)
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let probs = spec.missing_probs();

    let mut instances = Vec::new();
    for (id, center) in centers.iter().enumerate() {
        let mut present: Vec<bool> = probs.iter().map(|&p| !rng.random_bool(p)).collect();
        if !present.contains(&true) {
            // every identity is seen by at least one camera: the least likely
            // to go missing, lowest index first
            let keep = (0..spec.num_cameras)
                .min_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)))
                .expect("at least one camera");
            present[keep] = true;
        }
        for (camera, offset) in offsets.iter().enumerate() {
            if !present[camera] {
                continue;
            }
            let count = rng.random_range(spec.min_images..=spec.max_images);
            for n in 0..count {
                let mut f: Vec<f64> = center
                    .iter()
                    .zip(offset)
                    .map(|(c, o)| c + o + noise.sample(rng))
                    .collect();
                if normalize_in_place(&mut f) == 0.0 {
                    f = random_direction(d, rng);
                }
                instances.push(Instance {
                    id,
                    camera,
                    key: format!("id{id:04}_c{}_{n:03}", camera + 1),
                    feature: f,
                });
            }
        }
    }
    Ok(instances)
}

/// Every generated instance in one dataset, without a train/test split.
pub fn generate_all(spec: &SynthSpec) -> Result<FeatureDataset> {
    spec.validate()?;
    let instances = sample_instances(spec, &mut spec.seed.rng())?;
    to_dataset(instances, spec.d_in)
}

/// Identity-disjoint train, query and gallery sets.
pub fn generate(spec: &SynthSpec) -> Result<SynthSplit> {
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let d = spec.d_in;
    let instances = sample_instances(spec, &mut rng)?;

    let mut ids: Vec<usize> = (0..spec.num_ids).collect();
    ids.shuffle(&mut rng);
    let num_train = ((spec.num_ids as f64) * spec.train_id_fraction).round() as usize;
    let mut is_train = vec![false; spec.num_ids];
    for &id in &ids[..num_train.min(spec.num_ids)] {
        is_train[id] = true;
    }

    // the first image of each camera is the query for identities seen by at
    // least two cameras; everything else of a test identity is gallery
    let mut cameras_of = vec![Vec::new(); spec.num_ids];
    for inst in &instances {
        if !cameras_of[inst.id].contains(&inst.camera) {
            cameras_of[inst.id].push(inst.camera);
        }
    }
    let mut train = Vec::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    let mut taken = vec![vec![false; spec.num_cameras]; spec.num_ids];
    for inst in instances {
        if is_train[inst.id] {
            train.push(inst);
        } else if cameras_of[inst.id].len() >= 2 && !taken[inst.id][inst.camera] {
            taken[inst.id][inst.camera] = true;
            query.push(inst);
        } else {
            gallery.push(inst);
        }
    }
    Ok(SynthSplit {
        train: to_dataset(train, d)?,
        query: to_dataset(query, d)?,
        gallery: to_dataset(gallery, d)?,
    })
}

fn to_dataset(instances: Vec<Instance>, d: usize) -> Result<FeatureDataset> {
    if instances.is_empty() {
        return Err(invalid(
            "a split came out empty; adjust num_ids or train_id_fraction",
        ));
    }
    let n = instances.len();
    let mut data = Vec::with_capacity(n * d);
    let mut cams = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for inst in instances {
        data.extend(inst.feature);
        cams.push(inst.camera as i64 + 1);
        ids.push(inst.id as i64);
        keys.push(inst.key);
    }
    let set = UnlabeledSet::new(Matrix::from_vec(n, d, data)?, &cams, keys)?;
    FeatureDataset::new(set, Some(ids))
}
