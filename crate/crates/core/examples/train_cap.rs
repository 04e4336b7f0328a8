//! Full training run with per-epoch label quality and held-out mAP.
//!
//! cargo run --release --example train_cap -- [epochs] [seed]

use cap_reid::eval::GroundTruthObserver;
use cap_reid::trainer::run_training_with;
use cap_reid::{evaluate, generate, Encoder, RandomSeed, SynthSpec, TrainConfig};

fn main() -> cap_reid::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(20, |a| a.parse().expect("epochs"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));

    let split = generate(&SynthSpec {
        seed: RandomSeed(seed),
        ..SynthSpec::default()
    })?;
    let config = TrainConfig {
        epochs,
        seed: RandomSeed(seed),
        ..TrainConfig::default()
    };
    let before = evaluate(
        &split.query,
        &split.gallery,
        &Encoder::identity(split.train.unlabeled().dim()),
    )?;
    println!("raw features: rank-1 {:.3} mAP {:.3}", before.rank_1, before.map);

    let ids = split.train.true_ids().unwrap();
    let mut observer = GroundTruthObserver::new(ids).with_retrieval(&split.query, &split.gallery);
    let (encoder, report) = run_training_with(split.train.unlabeled(), &config, &mut observer)?;
    println!("epoch clusters proxies    loss      lr   ARI   mAP");
    for r in &report.records {
        println!(
            "{:5} {:8} {:7} {:7.4} {:.1e} {:.3} {:.3}",
            r.epoch,
            r.num_clusters,
            r.num_proxies,
            r.loss,
            r.lr,
            r.ari.unwrap_or(f64::NAN),
            r.eval_map.unwrap_or(f64::NAN)
        );
    }
    let after = evaluate(&split.query, &split.gallery, &encoder)?;
    println!(
        "trained: rank-1 {:.3} rank-5 {:.3} mAP {:.3}",
        after.rank_1, after.rank_5, after.map
    );
    Ok(())
}
