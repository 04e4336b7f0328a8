//! Cluster raw features with DBSCAN, once on Euclidean and once on
//! k-reciprocal Jaccard distances, and score both against the true identities.

use cap_reid::synth::generate_all;
use cap_reid::{
    dbscan, filter_reliable, jaccard_distance, label_quality, pairwise_euclidean, RandomSeed, SynthSpec,
};

fn main() -> cap_reid::Result<()> {
    let data = generate_all(&SynthSpec {
        num_ids: 40,
        seed: RandomSeed(1),
        ..SynthSpec::default()
    })?;
    let features = data.unlabeled().features();
    let truth = data.true_ids().unwrap();

    let euclid = pairwise_euclidean(features, true)?;
    let jaccard = jaccard_distance(features, 30, 6)?;
    println!("{} instances of 40 identities seen by 4 cameras", data.len());
    println!(
        "{:>10} {:>5} {:>9} {:>9} {:>6} {:>6}",
        "distance", "eps", "clusters", "outliers", "ARI", "NMI"
    );
    for (name, dist) in [("euclidean", &euclid), ("jaccard", &jaccard)] {
        for eps in [0.3, 0.5, 0.7] {
            let labels = filter_reliable(&dbscan(dist, eps, 4)?, 2);
            let q = label_quality(&labels, truth)?;
            println!(
                "{name:>10} {eps:>5.1} {:>9} {:>9} {:>6.3} {:>6.3}",
                labels.num_clusters(),
                labels.num_outliers(),
                q.ari,
                q.nmi
            );
        }
    }
    Ok(())
}
