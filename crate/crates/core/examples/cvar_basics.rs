//! CVaR of a discrete payoff and its recursive composition on a tree.
//!
//! `cargo run --example cvar_basics`

use mean_risk_dp::risk::{
    composed_profile, cvar, one_step_cvar, ConditionalDistribution, RiskSpec,
};
use mean_risk_dp::tree::{build_iid_tree, ReturnModel};

/// Drops rounding residue so values near zero print as `0`.
fn z(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

fn main() -> mean_risk_dp::Result<()> {
    let payoff = [-5.0, 1.0, 2.0, 4.0, 10.0];
    let probs = [0.05, 0.15, 0.3, 0.3, 0.2];
    println!("payoff {payoff:?}, probabilities {probs:?}");
    for alpha in [0.05, 0.1, 0.25, 0.5, 1.0] {
        println!(
            "  CVaR at alpha {alpha:<4}: {:>8.4}",
            z(cvar(alpha, &payoff, &probs))
        );
    }

    let spec = RiskSpec::new(0.25)?;
    let dist = ConditionalDistribution::new(payoff.to_vec(), probs.to_vec())?;
    let shifted =
        ConditionalDistribution::new(payoff.iter().map(|x| x + 3.0).collect(), probs.to_vec())?;
    println!(
        "adding 3 in cash moves CVaR(0.25) from {:.4} to {:.4}",
        z(one_step_cvar(&spec, &dist)),
        z(one_step_cvar(&spec, &shifted))
    );

    // two periods of a fair coin; the terminal payoff is the number of heads
    let coin = ReturnModel::new(vec![vec![1.0], vec![1.0]], vec![0.5, 0.5])?;
    let tree = build_iid_tree(&coin, 2)?;
    let heads = [2.0, 1.0, 1.0, 0.0];
    let profiles = composed_profile(&tree, &spec, &heads)?;
    for n in tree.nodes().unwrap() {
        println!(
            "node {} (t = {}): -E = {:>6.3}, recursive CVaR = {:>6.3}",
            n.id,
            n.time,
            z(profiles[n.id].neg_mean),
            z(profiles[n.id].risk)
        );
    }
    println!(
        "one-shot CVaR(0.25) of the same payoff: {:.3}",
        z(cvar(0.25, &heads, &[0.25; 4]))
    );
    Ok(())
}
