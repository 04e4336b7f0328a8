//! Camera-aware proxy learning for unsupervised re-identification.
//!
//! The crate implements the full pseudo-label training loop:
//!
//! 1. embed every instance with the current [`Encoder`],
//! 2. build a k-reciprocal Jaccard distance ([`metric`]) and cluster it with
//!    DBSCAN ([`clustering`]),
//! 3. split each cluster into one proxy per camera ([`proxy`]),
//! 4. train against a proxy-level momentum memory ([`memory`]) with the
//!    intra-/inter-camera contrastive losses ([`losses`]) on proxy-balanced
//!    batches ([`sampler`]).
//!
//! [`trainer::run_training`] drives the whole loop; [`eval`] scores the result
//! with CMC and mAP. [`synth`] generates camera-shifted synthetic data so that
//! everything can be exercised without real images.
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run -p cap-reid --example synthetic_data
//! cargo run -p cap-reid --example jaccard_clustering
//! cargo run -p cap-reid --example camera_proxies
//! cargo run -p cap-reid --example proxy_memory_losses
//! cargo run -p cap-reid --example balanced_sampling
//! cargo run -p cap-reid --example train_cap
//! cargo run -p cap-reid --example ablation
//! cargo run -p cap-reid --example retrieval_eval
//! ```

pub mod binio;
pub mod cli;
pub mod clustering;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod labels;
pub mod linalg;
pub mod losses;
pub mod memory;
pub mod metric;
pub mod optim;
pub mod pca;
pub mod proxy;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use clustering::{dbscan, filter_reliable};
pub use data::{load_dataset, DataFormat, FeatureDataset, RandomSeed, UnlabeledSet};
pub use encoder::Encoder;
pub use error::{Error, Result};
pub use eval::{evaluate, label_quality, EvalResult, LabelQuality};
pub use labels::{ClusterAssignment, OUTLIER};
pub use linalg::{l2_normalize_rows, Matrix};
pub use losses::LossOutput;
pub use memory::ProxyMemory;
pub use metric::{jaccard_distance, pairwise_euclidean, DistanceKind, DistanceMatrix};
pub use proxy::{split_by_camera, ProxyLabeling};
pub use sampler::{plan_epoch, BatchPlan, SamplingStrategy};
pub use synth::{generate, SynthSpec, SynthSplit};
pub use trainer::{run_training, Objective, TrainConfig, TrainReport};
