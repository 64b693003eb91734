//! One period, a riskless bond and a stock that returns 1.3 or 0.9.
//!
//! Builds the bi-objective LP directly, enumerates its frontier, then gets
//! the same frontier from the backward recursion and picks the point with
//! expected terminal wealth 105.
//!
//! `cargo run --example micro_frontier`

use mean_risk_dp::bellman::{backward_recursion, scale_upper_image};
use mean_risk_dp::lp::{dichotomic_frontier, BiObjectiveLp, FrontierOptions, LinearProgram, Sense};
use mean_risk_dp::risk::RiskSpec;
use mean_risk_dp::strategy::{select_initial_profile, ProfileTarget};
use mean_risk_dp::tree::{build_binomial, BinomialMarket};

fn main() -> mean_risk_dp::Result<()> {
    // variables: bond, stock, z, u_up, u_down
    let mut lp = LinearProgram::new();
    let bond = lp.add_var(0.0, f64::INFINITY, 0.0);
    let stock = lp.add_var(0.0, f64::INFINITY, 0.0);
    let z = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let up = lp.add_var(0.0, f64::INFINITY, 0.0);
    let down = lp.add_var(0.0, f64::INFINITY, 0.0);
    lp.add_row(vec![(bond, 1.0), (stock, 1.0)], Sense::Eq, 1.0);
    // u ≥ −wealth − z in each state
    lp.add_row(
        vec![(up, 1.0), (z, 1.0), (bond, 1.0), (stock, 1.3)],
        Sense::Ge,
        0.0,
    );
    lp.add_row(
        vec![(down, 1.0), (z, 1.0), (bond, 1.0), (stock, 0.9)],
        Sense::Ge,
        0.0,
    );
    let alpha = 0.5;
    let bp = BiObjectiveLp {
        constraints: lp,
        objectives: [
            vec![-1.0, -1.1, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.5 / alpha, 0.5 / alpha],
        ],
    };
    let list = dichotomic_frontier(&bp)?;
    println!("frontier of the one-step LP:");
    for (v, x) in list.vertices.iter().zip(&list.solutions) {
        println!(
            "  (-E, CVaR) = ({:.3}, {:.3}) with bond {:.3}, stock {:.3}",
            v[0], v[1], x[0], x[1]
        );
    }

    let tree = build_binomial(&BinomialMarket {
        stock_annual_mean: 1.1,
        bond_annual_rate: 1.0,
        stock_up: 1.3,
        stock_down: 0.9,
        up_prob: 0.5,
        periods_per_year: 1,
        years: 1.0,
    })?;
    let spec = RiskSpec::new(alpha)?;
    let sol = backward_recursion(&tree, &spec, &FrontierOptions::default())?;
    let p0 = scale_upper_image(sol.root_image(), 100.0)?;
    println!("P0(100) from the recursion: {:?}", p0.vertices());
    let x = select_initial_profile(&p0, &ProfileTarget::target_mean(105.0))?;
    println!("target mean 105 gives ({}, {})", x.neg_mean, x.risk);
    Ok(())
}
