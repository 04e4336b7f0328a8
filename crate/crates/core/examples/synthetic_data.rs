//! Generate a synthetic train/query/gallery split and write it to disk.
//!
//! cargo run --example synthetic_data -- [out_dir]

use cap_reid::{generate, DataFormat, RandomSeed, SynthSpec};

fn main() -> cap_reid::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into());
    let spec = SynthSpec {
        num_ids: 60,
        missing_camera_prob: 0.2,
        seed: RandomSeed(7),
        ..SynthSpec::default()
    };
    let split = generate(&spec)?;
    for (name, part) in [
        ("train", &split.train),
        ("query", &split.query),
        ("gallery", &split.gallery),
    ] {
        let set = part.unlabeled();
        let mut per_camera = vec![0; set.num_cameras()];
        for &c in set.cameras() {
            per_camera[c] += 1;
        }
        let ids: std::collections::BTreeSet<_> = part.true_ids().unwrap().iter().collect();
        println!(
            "{name:>8}: {:5} instances, {:3} identities, per camera {per_camera:?}",
            set.len(),
            ids.len()
        );
    }
    for path in split.save(&out, DataFormat::Csv)? {
        println!("wrote {}", path.display());
    }
    std::fs::write(
        std::path::Path::new(&out).join("spec.json"),
        serde_json::to_string_pretty(&spec)?,
    )?;
    Ok(())
}
