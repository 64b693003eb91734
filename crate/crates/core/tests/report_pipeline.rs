use std::fs;
use std::process::Command;

use mean_risk_dp::report::{
    export_frontier_csv, export_report_json, export_trades_csv, import_report_json, run_pipeline,
    RunConfig,
};

const DESK: &str = r#"
initial_wealth = 100.0
target = "risk_aversion=0.5"

[market]
model = "moment_matched"
mean = [1.001, 1.006, 1.009]
covariance = [[0.0, 0.0, 0.0], [0.0, 0.0016, 0.0006], [0.0, 0.0006, 0.0036]]
horizon = 6

[risk]
alpha = 0.1

[paths]
count = 5
seed = 3
"#;

fn outputs(cfg: &RunConfig) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let r = run_pipeline(cfg).unwrap();
    let (mut json, mut csv, mut trades) = (Vec::new(), Vec::new(), Vec::new());
    export_report_json(&r, &mut json).unwrap();
    export_frontier_csv(&r, 3, &mut csv).unwrap();
    for p in &r.paths {
        export_trades_csv(p, &mut trades).unwrap();
    }
    (json, csv, trades)
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = RunConfig::from_toml_str(DESK).unwrap();
    let a = outputs(&cfg);
    assert_eq!(a, outputs(&cfg));
    assert!(a.1.len() > 100);
    let mut other = cfg.clone();
    other.paths.seed = 4;
    assert_ne!(a.2, outputs(&other).2);
}

#[test]
fn report_is_consistent() {
    let cfg = RunConfig::from_toml_str(DESK).unwrap();
    let r = run_pipeline(&cfg).unwrap();
    let sel = r.selected.unwrap();
    let dynamic = &r.baselines[0];
    assert!((dynamic.profile.neg_mean - sel.neg_mean).abs() <= 1e-9);
    assert!((dynamic.profile.risk - sel.risk).abs() <= 1e-9);
    for b in &r.baselines {
        assert!(b.contained, "{}", b.name);
        let d = b.dominating.unwrap();
        assert!(d.risk <= b.profile.risk + 1e-9);
    }
    let mut json = Vec::new();
    export_report_json(&r, &mut json).unwrap();
    let back = import_report_json(json.as_slice()).unwrap();
    assert_eq!(back.hash(), r.hash());
    assert_eq!(back.config_hash, cfg.hash());
}

#[test]
fn command_line_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("desk.toml");
    fs::write(&config, DESK).unwrap();
    let cache = dir.path().join("cache");
    let run = |verb: &str, extra: &[&str]| {
        let out = dir.path().join(verb);
        let status = Command::new(env!("CARGO_BIN_EXE_mrdp"))
            .arg(verb)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--cache-dir")
            .arg(&cache)
            .args(extra)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        (status.status.code(), out)
    };
    let (code, out) = run("frontier", &[]);
    assert_eq!(code, Some(0));
    assert!(out.join("root_frontier.csv").exists());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);

    let (code, out) = run(
        "trade",
        &["--paths", "3", "--seed", "9", "--target", "target_mean=104"],
    );
    assert_eq!(code, Some(0));
    assert!(out.join("trades_2.csv").exists() && !out.join("trades_3.csv").exists());
    assert_eq!(
        fs::read_dir(&cache).unwrap().count(),
        1,
        "backward pass reused"
    );
    let header = fs::read_to_string(out.join("trades_0.csv")).unwrap();
    assert!(
        header.starts_with("t,node,wealth,psi_0,psi_1,psi_2,neg_mean,risk,lambda_lo,lambda_hi\n")
    );

    let (code, out) = run("compare", &[]);
    assert_eq!(code, Some(0));
    let table = fs::read_to_string(out.join("baselines.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);

    let (code, out) = run("full", &["--alpha", "0.2", "--prune-tol", "1e-6"]);
    assert_eq!(code, Some(0));
    assert!(out.join("report.json").exists() && out.join("baselines.csv").exists());

    assert_eq!(run("full", &["--target", "target_mean=1000"]).0, Some(2));
    assert_eq!(run("full", &["--alpha", "1.5"]).0, Some(2));
    fs::write(&config, "initial_wealth = 1").unwrap();
    assert_eq!(run("full", &[]).0, Some(2));
}
