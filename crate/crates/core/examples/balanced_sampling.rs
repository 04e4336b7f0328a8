//! Compare how often each proxy is visited in one epoch under the three
//! batch samplers.

use cap_reid::trainer::build_labels;
use cap_reid::{plan_epoch, Encoder, RandomSeed, SamplingStrategy, SynthSpec, TrainConfig};

fn main() -> cap_reid::Result<()> {
    let data = cap_reid::synth::generate_all(&SynthSpec {
        num_ids: 30,
        camera_missing_probs: Some(vec![0.0, 0.2, 0.5, 0.8]),
        min_images: 2,
        max_images: 30,
        seed: RandomSeed(3),
        ..SynthSpec::default()
    })?;
    let set = data.unlabeled();
    let labels = build_labels(set, &Encoder::identity(set.dim()), &TrainConfig::default())?;
    let lab = &labels.labeling;
    let z = lab.num_proxies();
    let sizes: Vec<usize> = (0..z).map(|p| lab.members(p).len()).collect();
    println!(
        "{z} proxies, sizes from {} to {}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );

    for strategy in [
        SamplingStrategy::ProxyBalanced,
        SamplingStrategy::ClassBalanced,
        SamplingStrategy::Random,
    ] {
        let p = if strategy == SamplingStrategy::ClassBalanced {
            8.min(lab.num_clusters())
        } else {
            8
        };
        let plan = plan_epoch(lab, p, 4, strategy, RandomSeed(0))?;
        let mut visits = vec![0usize; z];
        for batch in &plan.batches {
            let mut seen: Vec<usize> = batch.iter().filter_map(|&i| lab.proxy_of(i)).collect();
            seen.sort_unstable();
            seen.dedup();
            seen.into_iter().for_each(|p| visits[p] += 1);
        }
        let never = visits.iter().filter(|&&v| v == 0).count();
        println!(
            "{strategy:?}: {} batches, proxy visits min {} max {}, {never} proxies never seen",
            plan.len(),
            visits.iter().min().unwrap(),
            visits.iter().max().unwrap()
        );
    }
    Ok(())
}
