//! The backward recursion against the whole-horizon problem solved as one LP.
//!
//! Random three-period trees; the monolithic frontier comes from a sweep of
//! weighted-sum solves. Prints the Hausdorff distance between the two.
//!
//! `cargo run --release --example bellman_vs_monolithic`

#[path = "../tests/common/mod.rs"]
mod common;

use std::time::Instant;

use mean_risk_dp::bellman::backward_recursion;
use mean_risk_dp::lp::FrontierOptions;
use mean_risk_dp::risk::RiskSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mean_risk_dp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!(
        "{:>2} {:>2} {:>2} {:>5} {:>9} {:>9} {:>10}",
        "T", "d", "k", "alpha", "vertices", "LP vars", "hausdorff"
    );
    for (t, d, k, alpha) in [
        (2, 2, 2, 0.5),
        (3, 2, 3, 0.25),
        (3, 3, 2, 1.0),
        (3, 3, 3, 0.25),
    ] {
        let tree = common::random_iid_tree(&mut rng, t, d, k);
        let spec = RiskSpec::new(alpha)?;
        let start = Instant::now();
        let sol = backward_recursion(&tree, &spec, &FrontierOptions::default())?;
        let recursion = start.elapsed();
        let bp = common::monolithic_lp(&tree, &spec);
        let start = Instant::now();
        let oracle = common::weight_sweep_frontier(&bp, 1000);
        let sweep = start.elapsed();
        println!(
            "{t:>2} {d:>2} {k:>2} {alpha:>5} {:>9} {:>9} {:>10.2e}   (recursion {recursion:.1?}, sweep {sweep:.1?})",
            sol.root_image().len(),
            bp.constraints.num_vars(),
            sol.root_image().hausdorff(&oracle)
        );
    }
    Ok(())
}
