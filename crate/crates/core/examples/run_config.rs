//! End-to-end run from a TOML configuration, as the `mrdp full` command does.
//!
//! `cargo run --release --example run_config [config.toml] [out_dir]`

use std::fs::{self, File};
use std::path::PathBuf;

use mean_risk_dp::report::{
    export_baselines_csv, export_report_json, export_root_frontier_csv, export_trades_csv,
    run_pipeline, RunConfig,
};

const DEFAULT: &str = r#"
initial_wealth = 100.0
target = "target_mean=104.5"

[market]
model = "iid"
scenarios = [[1.0, 1.08, 0.97], [1.0, 0.95, 1.05], [1.0, 1.01, 1.0]]
probs = [0.3, 0.3, 0.4]
horizon = 4

[risk]
alpha = 0.2

[paths]
count = 3
seed = 11
"#;

fn main() -> mean_risk_dp::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::from_toml_str(DEFAULT)?,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "run_config_out".into()));
    let report = run_pipeline(&cfg)?;
    println!("config hash {}", report.config_hash);
    println!("root frontier: {} vertices", report.root_frontier.len());
    for b in &report.baselines {
        println!(
            "{:<12} mean {:>9.4} CVaR {:>9.4} inside P0: {}",
            b.name, -b.profile.neg_mean, b.profile.risk, b.contained
        );
    }
    fs::create_dir_all(&out)?;
    export_root_frontier_csv(&report, File::create(out.join("root_frontier.csv"))?)?;
    export_baselines_csv(&report, File::create(out.join("baselines.csv"))?)?;
    for (i, p) in report.paths.iter().enumerate() {
        export_trades_csv(p, File::create(out.join(format!("trades_{i}.csv")))?)?;
    }
    export_report_json(&report, File::create(out.join("report.json"))?)?;
    println!("wrote {}", out.display());
    Ok(())
}
