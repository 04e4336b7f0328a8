//! Momentum memory updates and the three losses on a hand-made batch.

use cap_reid::losses::{baseline_loss, inter_loss, intra_loss, total_loss};
use cap_reid::{split_by_camera, ClusterAssignment, Matrix, ProxyMemory, UnlabeledSet};

fn main() -> cap_reid::Result<()> {
    let mut m = ProxyMemory::from_entries(Matrix::from_rows(&[[1.0, 0.0]])?, 0.2, 0.07)?;
    m.update_entry(0, &[0.0, 1.0])?;
    println!("e1 pulled towards e2 with mu 0.2: {:.4?}", m.entry(0));

    // two identities, each seen by cameras 1 and 2
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let features = Matrix::from_rows(&[[1.0, 0.0], [s, s], [0.0, 1.0], [-s, s]])?;
    let set = UnlabeledSet::with_index_keys(features.clone(), &[1, 2, 1, 2])?;
    let lab = split_by_camera(&ClusterAssignment::new(vec![0, 0, 1, 1])?, &set)?;
    let memory = ProxyMemory::init(&features, &lab, 0.2, 0.07)?;
    let instances = [0, 1, 2, 3];

    let base = baseline_loss(
        &ProxyMemory::init_clusters(&features, &lab, 0.2, 0.07)?,
        &features,
        &[0, 0, 1, 1],
    )?;
    let intra = intra_loss(&memory, &lab, &features, &instances)?;
    let inter = inter_loss(&memory, &lab, &features, &instances, 50)?;
    let total = total_loss(&intra, &inter, 0.5)?;
    println!("baseline {:.4}", base.value);
    println!("intra    {:.4}  per sample {:.4?}", intra.value, intra.terms);
    println!("inter    {:.4}  per sample {:.4?}", inter.value, inter.terms);
    println!("total    {:.4}", total.value);
    println!("gradient w.r.t. the batch:");
    for r in total.grad.iter_rows() {
        println!("  {r:+.4?}");
    }
    Ok(())
}
