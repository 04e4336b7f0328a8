//! Score a query/gallery split, write per-query AP, and project the gallery
//! embeddings onto two principal axes.

use cap_reid::pca::project_2d;
use cap_reid::{evaluate, generate, run_training, RandomSeed, SynthSpec, TrainConfig};

fn main() -> cap_reid::Result<()> {
    let out = std::env::temp_dir().join("cap_reid_retrieval");
    std::fs::create_dir_all(&out)?;
    let split = generate(&SynthSpec {
        num_ids: 40,
        seed: RandomSeed(5),
        ..SynthSpec::default()
    })?;
    let config = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let (encoder, _) = run_training(split.train.unlabeled(), &config)?;
    let result = evaluate(&split.query, &split.gallery, &encoder)?;
    println!("{}", serde_json::to_string_pretty(&result)?);

    let per_query = out.join("per_query.csv");
    result.write_per_query_csv(split.query.unlabeled().keys(), &per_query)?;
    let worst = result
        .per_query_ap
        .iter()
        .zip(split.query.unlabeled().keys())
        .filter_map(|(ap, k)| ap.map(|ap| (ap, k)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((ap, key)) = worst {
        println!("hardest query {key}: AP {ap:.3}");
    }

    let coords = project_2d(&encoder.embed(split.gallery.unlabeled().features())?)?;
    let ids = split.gallery.true_ids().unwrap();
    println!("first gallery points on the principal plane:");
    for (i, id) in ids.iter().enumerate().take(5) {
        println!(
            "  id {id:3}  ({:+.3}, {:+.3})",
            coords.get(i, 0),
            coords.get(i, 1)
        );
    }
    println!("per-query AP written to {}", per_query.display());
    Ok(())
}
