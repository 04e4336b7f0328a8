//! Command-line surface: `gen`, `train`, `eval`, `labels`, `project`.
//!
//! Exit codes: 0 on success, 2 for usage errors and missing input files,
//! 1 for any other failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_dataset, DataFormat, FeatureDataset, RandomSeed};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::eval::{evaluate, label_quality, GroundTruthObserver};
use crate::optim::OptimizerKind;
use crate::pca::project_2d;
use crate::sampler::SamplingStrategy;
use crate::synth::{generate, SynthSpec};
use crate::trainer::{build_labels, run_training_with, NoObserver, Objective, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "capreid",
    version,
    about = "Camera-aware proxy training on feature datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic train/query/gallery split.
    Gen(GenArgs),
    /// Train an encoder on an unlabeled dataset.
    Train(TrainArgs),
    /// Score retrieval on a query/gallery split.
    Eval(EvalArgs),
    /// Cluster once and dump the camera-aware proxy labels.
    Labels(LabelsArgs),
    /// Dump 2-D PCA coordinates of (encoded) features.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with SynthSpec fields; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    ids: Option<usize>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    id_separation: Option<f64>,
    #[arg(long)]
    camera_shift: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    missing_prob: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Binary => DataFormat::Binary,
        }
    }
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON file with TrainConfig fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingStrategy>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    eps: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_json_file(p)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.epochs {
            cfg.epochs = v;
            cfg.intra_only_epochs = cfg.intra_only_epochs.min(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = RandomSeed(v);
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.objective {
            cfg.objective = v;
        }
        if let Some(v) = self.sampling {
            cfg.sampling = v;
        }
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
        if let Some(v) = self.eps {
            cfg.eps_dbscan = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Optional held-out split scored after every epoch.
    #[arg(long, requires = "gallery")]
    query: Option<PathBuf>,
    #[arg(long, requires = "query")]
    gallery: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    /// Write the JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query AP as CSV.
    #[arg(long)]
    per_query: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(missing) = missing_input(&cli.command) {
        eprintln!("error: input file not found: {}", missing.display());
        return 2;
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn missing_input(cmd: &Command) -> Option<&Path> {
    let inputs: Vec<&Path> = match cmd {
        Command::Gen(a) => a.spec.iter().map(PathBuf::as_path).collect(),
        Command::Train(a) => [
            Some(&a.data),
            a.config.config.as_ref(),
            a.query.as_ref(),
            a.gallery.as_ref(),
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect(),
        Command::Eval(a) => vec![&a.checkpoint, &a.query, &a.gallery],
        Command::Labels(a) => [Some(&a.data), a.checkpoint.as_ref(), a.config.config.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect(),
        Command::Project(a) => [Some(&a.data), a.checkpoint.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect(),
    };
    inputs.into_iter().find(|p| !p.exists())
}

fn load(path: &Path) -> Result<FeatureDataset> {
    load_dataset(path, DataFormat::from_path(path))
}

fn load_encoder(path: Option<&PathBuf>, d_in: usize) -> Result<Encoder> {
    let enc = match path {
        Some(p) => Encoder::load(p)?,
        None => Encoder::identity(d_in),
    };
    if enc.input_dim() != d_in {
        return Err(Error::Shape(format!(
            "checkpoint expects {} input dimensions, data has {d_in}",
            enc.input_dim()
        )));
    }
    Ok(enc)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => {
            let mut spec = match &a.spec {
                Some(p) => serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(p)?))?,
                None => SynthSpec::default(),
            };
            let overrides = [
                (a.ids, &mut spec.num_ids),
                (a.cameras, &mut spec.num_cameras),
                (a.dim, &mut spec.d_in),
            ];
            for (v, slot) in overrides {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            let overrides = [
                (a.id_separation, &mut spec.id_separation),
                (a.camera_shift, &mut spec.camera_shift),
                (a.noise, &mut spec.noise_sigma),
                (a.missing_prob, &mut spec.missing_camera_prob),
            ];
            for (v, slot) in overrides {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            if let Some(s) = a.seed {
                spec.seed = RandomSeed(s);
            }
            let split = generate(&spec)?;
            let paths = split.save(&a.out, a.format.into())?;
            for (p, d) in paths.iter().zip([&split.train, &split.query, &split.gallery]) {
                println!("{} ({} instances)", p.display(), d.len());
            }
        }
        Command::Train(a) => {
            let cfg = a.config.resolve()?;
            let data = load(&a.data)?;
            let held_out = match (&a.query, &a.gallery) {
                (Some(q), Some(g)) => Some((load(q)?, load(g)?)),
                _ => None,
            };
            std::fs::create_dir_all(&a.out)?;
            let (encoder, report) = match (data.true_ids(), &held_out) {
                (Some(ids), Some((q, g))) => {
                    let mut obs = GroundTruthObserver::new(ids).with_retrieval(q, g);
                    run_training_with(data.unlabeled(), &cfg, &mut obs)?
                }
                (Some(ids), None) => {
                    run_training_with(data.unlabeled(), &cfg, &mut GroundTruthObserver::new(ids))?
                }
                (None, _) => run_training_with(data.unlabeled(), &cfg, &mut NoObserver)?,
            };
            encoder.save(a.out.join("enc.bin"))?;
            report.write_csv(a.out.join("report.csv"))?;
            report.write_summary(a.out.join("summary.json"))?;
            serde_json::to_writer_pretty(std::fs::File::create(a.out.join("config.json"))?, &cfg)?;
            if let Some(last) = report.last() {
                println!(
                    "epoch {}: {} clusters, {} proxies, loss {:.4}",
                    last.epoch, last.num_clusters, last.num_proxies, last.loss
                );
            }
        }
        Command::Eval(a) => {
            let enc = Encoder::load(&a.checkpoint)?;
            let (q, g) = (load(&a.query)?, load(&a.gallery)?);
            let result = evaluate(&q, &g, &enc)?;
            if let Some(p) = &a.out {
                result.save_json(p)?;
            }
            if let Some(p) = &a.per_query {
                result.write_per_query_csv(q.unlabeled().keys(), p)?;
            }
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Labels(a) => {
            let cfg = a.config.resolve()?;
            let data = load(&a.data)?;
            let enc = load_encoder(a.checkpoint.as_ref(), data.unlabeled().dim())?;
            let labels = build_labels(data.unlabeled(), &enc, &cfg)?;
            std::fs::create_dir_all(&a.out)?;
            labels
                .labeling
                .write_csv(data.unlabeled(), a.out.join("labels.csv"))?;
            print!(
                "{} clusters, {} proxies, {} outliers",
                labels.assignment.num_clusters(),
                labels.labeling.num_proxies(),
                labels.assignment.num_outliers()
            );
            if let Some(ids) = data.true_ids() {
                let q = label_quality(&labels.assignment, ids)?;
                print!(", ARI {:.4}, NMI {:.4}", q.ari, q.nmi);
            }
            println!();
        }
        Command::Project(a) => {
            let data = load(&a.data)?;
            let set = data.unlabeled();
            let enc = load_encoder(a.checkpoint.as_ref(), set.dim())?;
            let coords = project_2d(&enc.embed(set.features())?)?;
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = csv::Writer::from_path(&a.out)?;
            w.write_record(["key", "camera", "true_id", "pc1", "pc2"])?;
            let cams = set.camera_labels();
            for i in 0..set.len() {
                w.write_record([
                    set.keys()[i].clone(),
                    cams[i].to_string(),
                    data.true_ids().map(|t| t[i].to_string()).unwrap_or_default(),
                    coords.get(i, 0).to_string(),
                    coords.get(i, 1).to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
