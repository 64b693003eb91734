//! Ten years of daily trading in a bond and one stock (2500 periods).
//!
//! Runs the backward recursion on the implicit binomial lattice, then
//! compares the frontier with the bond-only, stock-only and equally
//! weighted rebalancing strategies.
//!
//! `cargo run --release --example binomial_ten_years [annual_volatility]`

use std::time::Instant;

use mean_risk_dp::bellman::{backward_recursion, scale_upper_image};
use mean_risk_dp::lp::FrontierOptions;
use mean_risk_dp::risk::RiskSpec;
use mean_risk_dp::strategy::{
    evaluate_strategy, naive_strategy, select_initial_profile, ProfileTarget, StaticStrategy,
};
use mean_risk_dp::tree::{build_binomial, BinomialMarket};

fn main() -> mean_risk_dp::Result<()> {
    env_logger::init();
    let vol: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("volatility"))
        .unwrap_or(0.0475);
    let market = BinomialMarket::from_volatility(1.05, 1.01, vol, 250, 10.0);
    let tree = build_binomial(&market)?;
    let spec = RiskSpec::new(0.01)?;
    let v0 = 100.0;
    println!(
        "horizon {} steps, up {:.6}, down {:.6}",
        tree.horizon(),
        market.stock_up,
        market.stock_down
    );

    let start = Instant::now();
    let opts = FrontierOptions {
        prune_tol: Some(1e-7),
        ..FrontierOptions::default()
    };
    let sol = backward_recursion(&tree, &spec, &opts)?;
    let p0 = scale_upper_image(sol.root_image(), v0)?;
    println!(
        "backward recursion: {:.1?}, {} root vertices",
        start.elapsed(),
        p0.len()
    );
    let (lo, hi) = p0.neg_mean_range();
    println!(
        "expected terminal wealth on the frontier: {:.2} .. {:.2}",
        -hi, -lo
    );
    println!(
        "risk on the frontier: {:.2} .. {:.2}",
        p0.risk_range().0,
        p0.risk_range().1
    );

    println!("{:<18} {:>10} {:>10}", "strategy", "-E", "risk");
    let rows = [
        ("bond only", StaticStrategy::fixed_mix(vec![1.0, 0.0])?),
        ("stock only", StaticStrategy::fixed_mix(vec![0.0, 1.0])?),
        ("equally weighted", naive_strategy(&tree)),
    ];
    for (name, s) in &rows {
        let p = evaluate_strategy(&tree, s, &spec, v0)?;
        println!("{name:<18} {:>10.2} {:>10.2}", p.neg_mean, p.risk);
    }
    let x = select_initial_profile(&p0, &ProfileTarget::target_mean(160.0))?;
    println!("frontier point with mean 160: risk {:.2}", x.risk);
    Ok(())
}
