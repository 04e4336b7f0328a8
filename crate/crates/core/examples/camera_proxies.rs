//! Split clusters into one proxy per camera and inspect the index maps and
//! the positive/negative proxy sets of a sample.

use cap_reid::proxy::{hard_negative_set, positive_set};
use cap_reid::trainer::build_labels;
use cap_reid::{Encoder, ProxyMemory, RandomSeed, SynthSpec, TrainConfig};

fn main() -> cap_reid::Result<()> {
    let data = cap_reid::synth::generate_all(&SynthSpec {
        num_ids: 12,
        missing_camera_prob: 0.3,
        seed: RandomSeed(2),
        ..SynthSpec::default()
    })?;
    let set = data.unlabeled();
    let labels = build_labels(set, &Encoder::identity(set.dim()), &TrainConfig::default())?;
    let lab = &labels.labeling;
    println!(
        "{} clusters became {} proxies over {} cameras",
        lab.num_clusters(),
        lab.num_proxies(),
        lab.num_cameras()
    );
    for c in 0..lab.num_cameras() {
        println!(
            "camera {} : proxies {:?} ({} images)",
            set.camera_value(c),
            lab.camera_range(c),
            lab.per_camera_image_counts()[c]
        );
    }
    for y in 0..lab.num_clusters().min(5) {
        let cells: Vec<String> = lab
            .proxies_of_cluster(y)
            .iter()
            .map(|&p| {
                let (c, local) = lab.camera_and_local(p);
                format!(
                    "p{p}=cam{}#{local}({})",
                    set.camera_value(c),
                    lab.members(p).len()
                )
            })
            .collect();
        println!("cluster {y}: {}", cells.join(" "));
    }

    let memory = ProxyMemory::init(&labels.features, lab, 0.2, 0.07)?;
    if let Some(i) = (0..set.len()).find(|&i| lab.proxy_of(i).is_some()) {
        println!("\nsample {} ({})", i, set.keys()[i]);
        println!("  own proxy        {}", lab.proxy_of(i).unwrap());
        println!("  positives        {:?}", positive_set(lab, i)?);
        println!(
            "  5 hard negatives {:?}",
            hard_negative_set(lab, &memory, labels.features.row(i), i, 5)?
        );
    }
    Ok(())
}
