//! Configuration, end-to-end runs and their outputs.

mod cache;
mod config;

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{cache_path, decode_stages, encode_stages, load_stages, store_stages};
pub use config::{
    BaselineConfig, FrontierConfig, MarketConfig, OutputConfig, PathsConfig, RiskConfig, RunConfig,
};

use crate::bellman::{backward_recursion, scale_upper_image, BackwardSolution, UpperImage};
use crate::error::{Error, Result};
use crate::risk::{MeanRiskProfile, RiskSpec};
use crate::strategy::{
    evaluate_strategy, forward_strategy_path, myopic_strategy, naive_strategy,
    select_initial_profile, PathOutcome,
};
use crate::tree::ScenarioTree;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Frontier vertices of one node (or of all nodes of an i.i.d. level), unit wealth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierTable {
    pub t: usize,
    pub node: Option<usize>,
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub name: String,
    pub profile: MeanRiskProfile,
    /// Frontier point with the same expected value, when in range.
    pub dominating: Option<MeanRiskProfile>,
    /// Whether `profile` lies in `P₀(v₀)` within 1e-9.
    pub contained: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub backward_s: f64,
    pub forward_s: f64,
    pub compare_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    /// `P₀(v₀)`.
    pub root_frontier: Vec<[f64; 2]>,
    /// Unit-wealth frontiers at the exported levels.
    pub frontiers: Vec<FrontierTable>,
    pub selected: Option<MeanRiskProfile>,
    pub paths: Vec<PathOutcome>,
    pub baselines: Vec<BaselineRow>,
    /// Wall-clock times; left out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub timings: Timings,
}

impl RunReport {
    /// SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        config::hash_json(self)
    }

    pub fn root_image(&self) -> Result<UpperImage> {
        UpperImage::new(self.root_frontier.clone())
    }
}

/// Which parts of the pipeline to run after the backward recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phases {
    pub forward: bool,
    pub compare: bool,
}

impl Phases {
    pub const ALL: Phases = Phases {
        forward: true,
        compare: true,
    };
    pub const BACKWARD: Phases = Phases {
        forward: false,
        compare: false,
    };
}

/// Stage solutions for `config`, read from or written to `cache_dir`.
pub fn backward_stage(
    config: &RunConfig,
    tree: &ScenarioTree,
    spec: &RiskSpec,
    cache_dir: Option<&Path>,
) -> Result<BackwardSolution> {
    let key = config.backward_hash();
    if let Some(dir) = cache_dir {
        if let Some(sol) = load_stages(dir, &key)? {
            if sol.horizon() == tree.horizon() {
                info!(
                    "stage solutions loaded from {}",
                    cache_path(dir, &key).display()
                );
                return Ok(sol);
            }
        }
    }
    let sol = backward_recursion(tree, spec, &config.frontier_options())?;
    if let Some(dir) = cache_dir {
        let path = store_stages(dir, &key, &sol)?;
        info!("stage solutions cached in {}", path.display());
    }
    Ok(sol)
}

/// Root-to-leaf branch sequences drawn by conditional probabilities.
pub fn sample_paths(tree: &ScenarioTree, count: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if count == 0 {
        return Err(Error::Parameter("path count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::with_capacity(count);
    for _ in 0..count {
        let mut at = tree.root();
        let mut path = Vec::with_capacity(tree.horizon());
        while at.time < tree.horizon() {
            let probs = tree.child_probs(&at);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut b = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    b = i;
                    break;
                }
            }
            path.push(b);
            at = tree.step(&at, b)?;
        }
        paths.push(path);
    }
    Ok(paths)
}

fn frontier_tables(sol: &BackwardSolution, levels: Option<&[usize]>) -> Vec<FrontierTable> {
    let mut out = Vec::new();
    for st in &sol.stages {
        if levels.is_some_and(|l| !l.contains(&st.t)) {
            continue;
        }
        for f in &st.frontiers {
            out.push(FrontierTable {
                t: st.t,
                node: f.node,
                vertices: f.image.vertices().to_vec(),
            });
        }
    }
    out
}

/// Backward recursion, profile selection, forward paths and baselines.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    run_pipeline_with(config, Phases::ALL, None)
}

pub fn run_pipeline_with(
    config: &RunConfig,
    phases: Phases,
    cache_dir: Option<&Path>,
) -> Result<RunReport> {
    config.validate()?;
    let tree = config.build_tree().map_err(|e| e.at_stage("market"))?;
    let spec = config.risk_spec()?;
    let v0 = config.initial_wealth;
    let mut timings = Timings::default();

    let clock = Instant::now();
    let sol =
        backward_stage(config, &tree, &spec, cache_dir).map_err(|e| e.at_stage("backward"))?;
    timings.backward_s = clock.elapsed().as_secs_f64();
    let p0 = scale_upper_image(sol.root_image(), v0)?;
    let target = config.profile_target()?;
    let selected = select_initial_profile(&p0, &target).map_err(|e| e.at_stage("select"))?;

    let clock = Instant::now();
    let mut paths = Vec::new();
    if phases.forward {
        let branches = match &config.paths.explicit {
            Some(p) => p.clone(),
            None => sample_paths(&tree, config.paths.count, config.paths.seed)?,
        };
        paths = branches
            .par_iter()
            .map(|b| forward_strategy_path(&tree, &sol, &spec, v0, selected, b))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage("forward"))?;
    }
    timings.forward_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut baselines = Vec::new();
    if phases.compare {
        let row = |name: String, profile: MeanRiskProfile| BaselineRow {
            name,
            profile,
            dominating: p0
                .risk_at(profile.neg_mean)
                .map(|r| MeanRiskProfile::new(profile.neg_mean, r)),
            contained: p0.contains(profile.as_array(), 1e-9),
        };
        baselines.push(row("dynamic".into(), selected));
        let lambda = config.baselines.myopic_lambda;
        let myopic = myopic_strategy(&tree, lambda, &spec).map_err(|e| e.at_stage("compare"))?;
        let p = evaluate_strategy(&tree, &myopic, &spec, v0).map_err(|e| e.at_stage("compare"))?;
        baselines.push(row(format!("myopic({lambda})"), p));
        let p = evaluate_strategy(&tree, &naive_strategy(&tree), &spec, v0)
            .map_err(|e| e.at_stage("compare"))?;
        baselines.push(row("naive".into(), p));
    }
    timings.compare_s = clock.elapsed().as_secs_f64();

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        config_hash: config.hash(),
        config: config.clone(),
        root_frontier: p0.vertices().to_vec(),
        frontiers: frontier_tables(&sol, config.output.levels.as_deref()),
        selected: Some(selected),
        paths,
        baselines,
        timings,
    })
}

/// CSV `t,node,neg_mean,risk` of the unit-wealth frontiers at time `level`.
pub fn export_frontier_csv<W: Write>(report: &RunReport, level: usize, mut w: W) -> Result<()> {
    writeln!(w, "t,node,neg_mean,risk")?;
    for f in report.frontiers.iter().filter(|f| f.t == level) {
        let node = f.node.map(|n| n.to_string()).unwrap_or_default();
        for v in &f.vertices {
            writeln!(w, "{},{node},{},{}", f.t, v[0], v[1])?;
        }
    }
    Ok(())
}

/// CSV of the wealth-scaled root frontier `P₀(v₀)`.
pub fn export_root_frontier_csv<W: Write>(report: &RunReport, mut w: W) -> Result<()> {
    writeln!(w, "t,node,neg_mean,risk")?;
    for v in &report.root_frontier {
        writeln!(w, "0,0,{},{}", v[0], v[1])?;
    }
    Ok(())
}

/// CSV `t,node,wealth,psi_0..,neg_mean,risk,lambda_lo,lambda_hi` of one path.
pub fn export_trades_csv<W: Write>(path: &PathOutcome, mut w: W) -> Result<()> {
    let d = path.records.first().map(|r| r.position.len()).unwrap_or(0);
    let psi: Vec<String> = (0..d).map(|i| format!("psi_{i}")).collect();
    let sep = if d > 0 { "," } else { "" };
    writeln!(
        w,
        "t,node,wealth{sep}{},neg_mean,risk,lambda_lo,lambda_hi",
        psi.join(",")
    )?;
    for r in &path.records {
        let node = r.node.map(|n| n.to_string()).unwrap_or_default();
        let pos: Vec<String> = r.position.iter().map(|x| x.to_string()).collect();
        writeln!(
            w,
            "{},{node},{}{sep}{},{},{},{},{}",
            r.t,
            r.wealth,
            pos.join(","),
            r.profile.neg_mean,
            r.profile.risk,
            r.lambda[0],
            r.lambda[1]
        )?;
    }
    Ok(())
}

/// CSV `name,neg_mean,risk,dominating_neg_mean,dominating_risk,contained`.
pub fn export_baselines_csv<W: Write>(report: &RunReport, mut w: W) -> Result<()> {
    writeln!(
        w,
        "name,neg_mean,risk,dominating_neg_mean,dominating_risk,contained"
    )?;
    for b in &report.baselines {
        let (dm, dr) = b
            .dominating
            .map(|p| (p.neg_mean.to_string(), p.risk.to_string()))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{dm},{dr},{}",
            b.name, b.profile.neg_mean, b.profile.risk, b.contained
        )?;
    }
    Ok(())
}

pub fn export_report_json<W: Write>(report: &RunReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report).map_err(|e| Error::Internal(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

pub fn import_report_json<R: Read>(r: R) -> Result<RunReport> {
    let report: RunReport =
        serde_json::from_reader(r).map_err(|e| Error::Config(format!("report JSON: {e}")))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema {} is not supported",
            report.schema_version
        )));
    }
    Ok(report)
}
