//! Feature datasets, their CSV and binary encodings, and seeded randomness.
//!
//! Training code only ever sees an [`UnlabeledSet`]. Ground-truth identities
//! live next to it in [`FeatureDataset`] and are reachable only from the
//! evaluation side, so no training entry point can accept them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const DATASET_MAGIC: &[u8; 4] = b"CAPD";

/// Seed for every randomised operation. Equal seeds give bit-identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent seed for a sub-stream (one per epoch, per
    /// purpose, ...). SplitMix64 finaliser over `seed ^ tag`.
    pub fn derive(self, tag: u64) -> RandomSeed {
        let mut z = self
            .0
            .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RandomSeed(z ^ (z >> 31))
    }
}

/// Instances available to training: features, cameras and keys.
///
/// Cameras are stored densely as `0..num_cameras`; the label each dense index
/// came from is kept in `camera_values` so that two files re-indexed
/// independently can still be compared camera-by-camera.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    features: Matrix,
    cameras: Vec<usize>,
    camera_values: Vec<i64>,
    keys: Vec<String>,
}

impl UnlabeledSet {
    /// Validates the features and re-indexes `camera_labels` (any integers)
    /// to contiguous indices in ascending label order.
    pub fn new(features: Matrix, camera_labels: &[i64], keys: Vec<String>) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::InvalidParameter("dataset has no instances".into()));
        }
        if features.cols() < 2 {
            return Err(Error::InvalidParameter(format!(
                "feature dimension {} is below 2",
                features.cols()
            )));
        }
        if camera_labels.len() != n || keys.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows, {} cameras, {} keys",
                camera_labels.len(),
                keys.len()
            )));
        }
        if let Some((row, col)) = features.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let mut dense: BTreeMap<i64, usize> = camera_labels.iter().map(|&c| (c, 0)).collect();
        for (i, v) in dense.values_mut().enumerate() {
            *v = i;
        }
        let camera_values = dense.keys().copied().collect();
        let cameras = camera_labels.iter().map(|c| dense[c]).collect();
        Ok(Self {
            features,
            cameras,
            camera_values,
            keys,
        })
    }

    /// Convenience constructor with keys `"0"`, `"1"`, ...
    pub fn with_index_keys(features: Matrix, camera_labels: &[i64]) -> Result<Self> {
        let keys = (0..features.rows()).map(|i| i.to_string()).collect();
        Self::new(features, camera_labels, keys)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_cameras(&self) -> usize {
        self.camera_values.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Dense camera index of every instance.
    pub fn cameras(&self) -> &[usize] {
        &self.cameras
    }

    /// Original label of dense camera `c`.
    pub fn camera_value(&self, c: usize) -> i64 {
        self.camera_values[c]
    }

    /// Original camera label of every instance.
    pub fn camera_labels(&self) -> Vec<i64> {
        self.cameras.iter().map(|&c| self.camera_values[c]).collect()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

/// An [`UnlabeledSet`] plus optional ground-truth identities used only for
/// evaluation and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    unlabeled: UnlabeledSet,
    true_ids: Option<Vec<i64>>,
}

impl FeatureDataset {
    pub fn new(unlabeled: UnlabeledSet, true_ids: Option<Vec<i64>>) -> Result<Self> {
        if let Some(ids) = &true_ids {
            if ids.len() != unlabeled.len() {
                return Err(Error::Shape(format!(
                    "{} true ids for {} instances",
                    ids.len(),
                    unlabeled.len()
                )));
            }
        }
        Ok(Self { unlabeled, true_ids })
    }

    /// The part of the dataset training is allowed to see.
    pub fn unlabeled(&self) -> &UnlabeledSet {
        &self.unlabeled
    }

    pub fn true_ids(&self) -> Option<&[i64]> {
        self.true_ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unlabeled.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
        match format {
            DataFormat::Csv => self.save_csv(path),
            DataFormat::Binary => self.save_binary(path),
        }
    }

    /// Header `key,camera,f0,...,f{d-1}[,true_id]`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.unlabeled.dim();
        let mut header = vec!["key".to_string(), "camera".to_string()];
        header.extend((0..d).map(|j| format!("f{j}")));
        if self.true_ids.is_some() {
            header.push("true_id".into());
        }
        w.write_record(&header)?;
        let cams = self.unlabeled.camera_labels();
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.unlabeled.keys[i].clone());
            rec.push(cams[i].to_string());
            // `{}` on f64 prints the shortest string that parses back exactly.
            rec.extend(self.unlabeled.features.row(i).iter().map(|v| format!("{v}")));
            if let Some(ids) = &self.true_ids {
                rec.push(ids[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `CAPD`, version, N, d, C (u64), row-major f64 features, N camera
    /// labels (i64), a presence byte followed by N true ids (i64) when set,
    /// then N length-prefixed UTF-8 keys.
    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut w = BinWriter::new(file, DATASET_MAGIC)?;
        let set = &self.unlabeled;
        w.u64(set.len() as u64)?;
        w.u64(set.dim() as u64)?;
        w.u64(set.num_cameras() as u64)?;
        w.f64s(set.features.as_slice())?;
        for c in set.camera_labels() {
            w.i64(c)?;
        }
        match &self.true_ids {
            Some(ids) => {
                w.u8(1)?;
                for &id in ids {
                    w.i64(id)?;
                }
            }
            None => w.u8(0)?,
        }
        for k in &set.keys {
            w.bytes(k.as_bytes())?;
        }
        w.finish()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.csv` is CSV, anything else is the binary format.
    pub fn from_path(path: impl AsRef<Path>) -> Self {
        match path.as_ref().extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<FeatureDataset> {
    match format {
        DataFormat::Csv => load_csv(path),
        DataFormat::Binary => load_binary(path),
    }
}

fn load_csv(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "key" || cols[1] != "camera" {
        return Err(Error::Format {
            what: "dataset csv",
            reason: "header must start with key,camera".into(),
        });
    }
    let has_truth = cols.last() == Some(&"true_id");
    let d = cols.len() - 2 - usize::from(has_truth);
    for (j, name) in cols[2..2 + d].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Format {
                what: "dataset csv",
                reason: format!("expected column f{j}, found {name}"),
            });
        }
    }

    let mut keys = Vec::new();
    let mut cams = Vec::new();
    let mut feats = Vec::new();
    let mut truth = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Load {
            row,
            reason: e.to_string(),
        })?;
        if rec.len() != cols.len() {
            return Err(Error::Load {
                row,
                reason: format!("{} fields, expected {}", rec.len(), cols.len()),
            });
        }
        keys.push(rec[0].to_string());
        cams.push(parse_int(&rec[1], row, "camera")?);
        for j in 0..d {
            let v: f64 = rec[2 + j].trim().parse().map_err(|_| Error::Load {
                row,
                reason: format!("f{j} is not a number: {:?}", &rec[2 + j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row,
                    reason: format!("f{j} is not finite"),
                });
            }
            feats.push(v);
        }
        if has_truth {
            truth.push(parse_int(&rec[2 + d], row, "true_id")?);
        }
    }
    let n = keys.len();
    let features = Matrix::from_vec(n, d, feats)?;
    let set = UnlabeledSet::new(features, &cams, keys)?;
    FeatureDataset::new(set, has_truth.then_some(truth))
}

fn parse_int(s: &str, row: usize, what: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| Error::Load {
        row,
        reason: format!("{what} is not an integer: {s:?}"),
    })
}

fn load_binary(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let file = BufReader::new(File::open(path)?);
    let mut r = BinReader::new(file, DATASET_MAGIC, "dataset")?;
    let n = r.usize()?;
    let d = r.usize()?;
    let c = r.usize()?;
    let mut feats = Vec::with_capacity(n * d);
    for row in 0..n {
        for j in 0..d {
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row,
                    reason: format!("f{j} is not finite"),
                });
            }
            feats.push(v);
        }
    }
    let cams = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
    let truth = match r.u8()? {
        0 => None,
        1 => Some((0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?),
        b => {
            return Err(Error::Format {
                what: "dataset",
                reason: format!("bad true-id flag {b}"),
            })
        }
    };
    let keys = (0..n)
        .map(|row| {
            String::from_utf8(r.bytes()?).map_err(|_| Error::Load {
                row,
                reason: "key is not UTF-8".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    let set = UnlabeledSet::new(Matrix::from_vec(n, d, feats)?, &cams, keys)?;
    if set.num_cameras() != c {
        return Err(Error::Format {
            what: "dataset",
            reason: format!("header says {c} cameras, found {}", set.num_cameras()),
        });
    }
    FeatureDataset::new(set, truth)
}
