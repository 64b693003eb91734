//! A year of monthly rebalancing between a bond and two correlated stocks.
//!
//! The one-step scenarios match the given means and covariance. Prints the
//! frontier size per month, compares fixed rules with the dynamic frontier
//! and writes the root frontier as CSV.
//!
//! `cargo run --release --example multi_asset_monthly [out.csv]`

use std::fs::File;
use std::io::{BufWriter, Write};

use mean_risk_dp::bellman::{backward_recursion, scale_upper_image};
use mean_risk_dp::lp::FrontierOptions;
use mean_risk_dp::risk::RiskSpec;
use mean_risk_dp::strategy::{evaluate_strategy, myopic_strategy, naive_strategy, StaticStrategy};
use mean_risk_dp::tree::{moment_matched_scenarios, ScenarioTree};

fn main() -> mean_risk_dp::Result<()> {
    let model = moment_matched_scenarios(
        &[1.001, 1.006, 1.009],
        &[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0016, 0.0006],
            vec![0.0, 0.0006, 0.0036],
        ],
    )?;
    println!("one-step scenarios:");
    for (r, p) in model.scenarios().iter().zip(model.probs()) {
        println!("  p = {p:.3}: {r:.4?}");
    }
    let tree = ScenarioTree::iid_lattice(&model, 12)?;
    let spec = RiskSpec::new(0.1)?;
    let sol = backward_recursion(&tree, &spec, &FrontierOptions::default())?;
    let sizes: Vec<usize> = sol
        .stages
        .iter()
        .map(|s| s.frontiers[0].image.len())
        .collect();
    println!("frontier vertices by month: {sizes:?}");

    let v0 = 100.0;
    let p0 = scale_upper_image(sol.root_image(), v0)?;
    println!(
        "{:<22} {:>10} {:>10} {:>16}",
        "rule", "mean", "CVaR", "frontier CVaR"
    );
    let rules = [
        ("bond only", StaticStrategy::fixed_mix(vec![1.0, 0.0, 0.0])?),
        (
            "60/40 stocks",
            StaticStrategy::fixed_mix(vec![0.0, 0.6, 0.4])?,
        ),
        ("equal weights", naive_strategy(&tree)),
        ("myopic, weight 0.1", myopic_strategy(&tree, 0.1, &spec)?),
        ("myopic, weight 0.5", myopic_strategy(&tree, 0.5, &spec)?),
    ];
    for (name, rule) in &rules {
        let p = evaluate_strategy(&tree, rule, &spec, v0)?;
        let best = p0
            .risk_at(p.neg_mean)
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "out of range".into());
        println!(
            "{name:<22} {:>10.4} {:>10.4} {best:>16}",
            -p.neg_mean, p.risk
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "t,node,neg_mean,risk")?;
        for v in p0.vertices() {
            writeln!(w, "0,0,{},{}", v[0], v[1])?;
        }
        println!("wrote {path}");
    }
    Ok(())
}
