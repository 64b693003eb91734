//! Trading along one sampled path of a three-asset market.
//!
//! Picks the frontier point with risk aversion 0.3, then rebalances month by
//! month. Each row shows the holdings, the profile still attainable from that
//! node and the range of risk weights for which it is optimal.
//!
//! `cargo run --release --example trade_along_path [seed]`

use mean_risk_dp::bellman::{backward_recursion, scale_upper_image};
use mean_risk_dp::lp::FrontierOptions;
use mean_risk_dp::report::sample_paths;
use mean_risk_dp::risk::RiskSpec;
use mean_risk_dp::strategy::{forward_strategy_path, select_initial_profile, ProfileTarget};
use mean_risk_dp::tree::{moment_matched_scenarios, ScenarioTree};

fn main() -> mean_risk_dp::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed"))
        .unwrap_or(1);
    let model = moment_matched_scenarios(
        &[1.001, 1.006, 1.009],
        &[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0016, 0.0006],
            vec![0.0, 0.0006, 0.0036],
        ],
    )?;
    let tree = ScenarioTree::iid_lattice(&model, 12)?;
    let spec = RiskSpec::new(0.1)?;
    let sol = backward_recursion(&tree, &spec, &FrontierOptions::default())?;
    let v0 = 100.0;
    let p0 = scale_upper_image(sol.root_image(), v0)?;
    let x0 = select_initial_profile(&p0, &ProfileTarget::risk_aversion(0.3))?;
    println!("start: mean {:.4}, CVaR {:.4}", -x0.neg_mean, x0.risk);

    let branches = sample_paths(&tree, 1, seed)?.remove(0);
    let path = forward_strategy_path(&tree, &sol, &spec, v0, x0, &branches)?;
    println!(
        "{:>2} {:>6} {:>9} {:>27} {:>9} {:>9} {:>15}",
        "t", "branch", "wealth", "units (bond, s1, s2)", "mean", "CVaR", "risk weight"
    );
    for (r, b) in path.records.iter().zip(&branches) {
        println!(
            "{:>2} {:>6} {:>9.4} {:>8.3} {:>8.3} {:>8.3} {:>9.4} {:>9.4}  [{:.3}, {:.3}]",
            r.t,
            b,
            r.wealth,
            r.position[0],
            r.position[1],
            r.position[2],
            -r.profile.neg_mean,
            r.profile.risk,
            r.lambda[0],
            r.lambda[1]
        );
    }
    println!("terminal wealth {:.4}", path.terminal_wealth);
    Ok(())
}
