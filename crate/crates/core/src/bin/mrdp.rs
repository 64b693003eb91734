use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mean_risk_dp::report::{
    export_baselines_csv, export_frontier_csv, export_report_json, export_root_frontier_csv,
    export_trades_csv, run_pipeline_with, Phases, RunConfig, RunReport,
};
use mean_risk_dp::Result;

/// Mean-risk frontiers and time-consistent trading on scenario trees.
#[derive(Parser)]
#[command(name = "mrdp", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Backward recursion only; writes frontier tables.
    Frontier(Opts),
    /// Forward strategy along given or sampled paths.
    Trade(Opts),
    /// Baseline comparison against the dynamic frontier.
    Compare(Opts),
    /// Backward, forward and comparison.
    Full(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `risk_budget=…`, `target_mean=…` or `risk_aversion=…`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    prune_tol: Option<f64>,
    /// Directory for cached stage solutions.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Opts {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            cfg.paths.seed = s;
        }
        if let Some(n) = self.paths {
            cfg.paths.count = n;
            cfg.paths.explicit = None;
        }
        if let Some(a) = self.alpha {
            cfg.risk.alpha = a;
        }
        if let Some(t) = &self.target {
            cfg.target = t.clone();
        }
        if let Some(p) = self.prune_tol {
            cfg.frontier.prune_tol = Some(p);
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_frontiers(report: &RunReport, dir: &Path) -> Result<()> {
    export_root_frontier_csv(report, create(dir, "root_frontier.csv")?)?;
    let mut levels: Vec<usize> = report.frontiers.iter().map(|f| f.t).collect();
    levels.dedup();
    for t in levels {
        export_frontier_csv(report, t, create(dir, &format!("frontier_t{t}.csv"))?)?;
    }
    Ok(())
}

fn run(verb: Verb) -> Result<()> {
    let (opts, phases) = match &verb {
        Verb::Frontier(o) => (o, Phases::BACKWARD),
        Verb::Trade(o) => (
            o,
            Phases {
                forward: true,
                compare: false,
            },
        ),
        Verb::Compare(o) => (
            o,
            Phases {
                forward: false,
                compare: true,
            },
        ),
        Verb::Full(o) => (o, Phases::ALL),
    };
    let (cfg, out) = opts.load()?;
    let cache = opts.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let report = run_pipeline_with(&cfg, phases, Some(&cache))?;
    fs::create_dir_all(&out)?;

    write_frontiers(&report, &out)?;
    for (i, p) in report.paths.iter().enumerate() {
        export_trades_csv(p, create(&out, &format!("trades_{i}.csv"))?)?;
    }
    if phases.compare {
        export_baselines_csv(&report, create(&out, "baselines.csv")?)?;
    }
    export_report_json(&report, create(&out, "report.json")?)?;

    let t = &report.timings;
    info!(
        "backward {:.2}s, forward {:.2}s, compare {:.2}s",
        t.backward_s, t.forward_s, t.compare_s
    );
    println!("config {}", report.config_hash);
    println!("root frontier: {} vertices", report.root_frontier.len());
    if let Some(s) = report.selected {
        println!("selected: mean {:.6}, risk {:.6}", -s.neg_mean, s.risk);
    }
    if !report.paths.is_empty() {
        let mean =
            report.paths.iter().map(|p| p.terminal_wealth).sum::<f64>() / report.paths.len() as f64;
        println!(
            "{} paths, average terminal wealth {mean:.6}",
            report.paths.len()
        );
    }
    for b in &report.baselines {
        let dom = b
            .dominating
            .map(|d| format!("{:.6}", d.risk))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<14} mean {:>12.6}  risk {:>12.6}  frontier risk {dom:>12}  inside {}",
            b.name, -b.profile.neg_mean, b.profile.risk, b.contained
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
