//! Baseline, intra-camera only and intra + inter training on the same data.
//!
//! cargo run --release --example ablation -- [seed]

use cap_reid::{evaluate, generate, run_training, Objective, RandomSeed, SynthSpec, TrainConfig};

fn main() -> cap_reid::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |a| a.parse().expect("seed"));
    let split = generate(&SynthSpec {
        seed: RandomSeed(seed),
        ..SynthSpec::default()
    })?;
    let variants = [
        ("baseline", TrainConfig::baseline()),
        (
            "intra",
            TrainConfig {
                objective: Objective::Intra,
                ..TrainConfig::default()
            },
        ),
        ("intra+inter", TrainConfig::default()),
    ];
    println!(
        "{:>12} {:>7} {:>7} {:>7}",
        "objective", "rank-1", "mAP", "final Y"
    );
    for (name, mut config) in variants {
        config.epochs = 20;
        config.seed = RandomSeed(seed);
        let (encoder, report) = run_training(split.train.unlabeled(), &config)?;
        let r = evaluate(&split.query, &split.gallery, &encoder)?;
        println!(
            "{name:>12} {:>7.3} {:>7.3} {:>7}",
            r.rank_1,
            r.map,
            report.last().map_or(0, |e| e.num_clusters)
        );
    }
    Ok(())
}
