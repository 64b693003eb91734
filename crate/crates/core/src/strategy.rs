//! Forward pass: choosing a point of the root frontier, turning it into
//! positions along a realized path, and the static baselines it is
//! compared against.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{
    assemble_one_step_vlp, terminal_upper_image, BackwardSolution, FrontierColumn, OneStepVlp,
    UpperImage,
};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Sense, Simplex};
use crate::risk::{composed_profile, cvar, one_step_profile, MeanRiskProfile, RiskSpec};
use crate::tree::{NodeCursor, ScenarioTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Desired value of the risk measure.
    RiskBudget,
    /// Desired expected terminal wealth.
    TargetMean,
    /// Initial weight `λ₀ ∈ [0, 1]` on risk against negative mean.
    RiskAversion,
}

/// How the investor picks a point of `P₀(v₀)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTarget {
    pub mode: TargetMode,
    pub value: f64,
}

impl ProfileTarget {
    pub fn target_mean(value: f64) -> Self {
        ProfileTarget {
            mode: TargetMode::TargetMean,
            value,
        }
    }

    pub fn risk_budget(value: f64) -> Self {
        ProfileTarget {
            mode: TargetMode::RiskBudget,
            value,
        }
    }

    pub fn risk_aversion(value: f64) -> Self {
        ProfileTarget {
            mode: TargetMode::RiskAversion,
            value,
        }
    }
}

impl fmt::Display for ProfileTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            TargetMode::RiskBudget => "risk_budget",
            TargetMode::TargetMean => "target_mean",
            TargetMode::RiskAversion => "risk_aversion",
        };
        write!(f, "{mode}={}", self.value)
    }
}

impl FromStr for ProfileTarget {
    type Err = Error;

    /// Parses `mode=value`, e.g. `target_mean=160`.
    fn from_str(s: &str) -> Result<Self> {
        let (mode, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("target '{s}' is not of the form mode=value")))?;
        let mode = match mode.trim() {
            "risk_budget" => TargetMode::RiskBudget,
            "target_mean" => TargetMode::TargetMean,
            "risk_aversion" => TargetMode::RiskAversion,
            other => return Err(Error::Usage(format!("unknown target mode '{other}'"))),
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("target value '{value}' is not a number")))?;
        Ok(ProfileTarget { mode, value })
    }
}

/// Minimal point of `p0` (already scaled to `v₀`) matching the target.
pub fn select_initial_profile(p0: &UpperImage, target: &ProfileTarget) -> Result<MeanRiskProfile> {
    if p0.is_empty() {
        return Err(Error::Internal("empty upper image".into()));
    }
    let v = p0.vertices();
    match target.mode {
        TargetMode::TargetMean => {
            let (lo, hi) = p0.neg_mean_range();
            let neg = -target.value;
            let risk = p0.risk_at(neg).ok_or(Error::Range {
                what: "target mean".into(),
                value: target.value,
                lo: -hi,
                hi: -lo,
            })?;
            Ok(MeanRiskProfile::new(neg, risk))
        }
        TargetMode::RiskBudget => {
            let (lo, hi) = p0.risk_range();
            let r = target.value;
            if !(r >= lo && r <= hi) {
                return Err(Error::Range {
                    what: "risk budget".into(),
                    value: r,
                    lo,
                    hi,
                });
            }
            // risk decreases strictly along the list
            let i = v.partition_point(|x| x[1] > r);
            if i == 0 || v[i][1] == r {
                return Ok(MeanRiskProfile::new(v[i][0], v[i][1]));
            }
            let (a, b) = (v[i - 1], v[i]);
            let w = (r - a[1]) / (b[1] - a[1]);
            Ok(MeanRiskProfile::new(a[0] + w * (b[0] - a[0]), r))
        }
        TargetMode::RiskAversion => {
            let l = target.value;
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Range {
                    what: "risk aversion".into(),
                    value: l,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
            let score = |x: &[f64; 2]| (1.0 - l) * x[0] + l * x[1];
            let best = v.iter().map(score).fold(f64::INFINITY, f64::min);
            let tol = 1e-12 * (1.0 + best.abs());
            // ties go to the lower-risk (later) vertex
            let i = v
                .iter()
                .rposition(|x| score(x) <= best + tol)
                .expect("nonempty");
            Ok(MeanRiskProfile::new(v[i][0], v[i][1]))
        }
    }
}

/// Blend of two adjacent frontier columns matching a mean target.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedralStep {
    /// Position in the reference units of the frontier's columns.
    pub position: Vec<f64>,
    /// Successor profiles in the columns' child order.
    pub successors: Vec<MeanRiskProfile>,
    /// Index of the left column.
    pub left: usize,
    /// Weight on the left column; the right one gets `1 − weight`.
    pub weight: f64,
}

/// Locates `x₁/v` among the vertex first coordinates and blends the two
/// bracketing columns, scaled by `v`. Targets outside the frontier's range
/// are clamped to the nearest vertex with a warning.
pub fn forward_step_polyhedral(
    image: &UpperImage,
    columns: &[FrontierColumn],
    wealth: f64,
    neg_mean: f64,
) -> Result<PolyhedralStep> {
    let a = image.vertices();
    let k = a.len();
    if k == 0 || columns.len() != k {
        return Err(Error::Internal(
            "frontier vertices and columns do not match".into(),
        ));
    }
    if !(wealth > 0.0) {
        return Err(Error::Domain(format!("wealth {wealth} must be positive")));
    }
    let r = neg_mean / wealth;
    let (left, weight) = if r <= a[0][0] {
        if a[0][0] - r > 1e-12 * (1.0 + r.abs()) {
            warn!(
                "mean target {r} beyond the frontier by {}; clamped",
                a[0][0] - r
            );
        }
        (0, 1.0)
    } else if r >= a[k - 1][0] {
        if r - a[k - 1][0] > 1e-12 * (1.0 + r.abs()) {
            warn!(
                "mean target {r} beyond the frontier by {}; clamped",
                r - a[k - 1][0]
            );
        }
        (k - 1, 1.0)
    } else {
        let i = a.partition_point(|x| x[0] <= r) - 1;
        if a[i][0] == r {
            (i, 1.0)
        } else {
            (i, (r - a[i + 1][0]) / (a[i][0] - a[i + 1][0]))
        }
    };
    let blend = |f: &dyn Fn(&FrontierColumn) -> Vec<f64>| -> Vec<f64> {
        let lhs = f(&columns[left]);
        if weight == 1.0 {
            return lhs.iter().map(|x| wealth * x).collect();
        }
        let rhs = f(&columns[left + 1]);
        lhs.iter()
            .zip(&rhs)
            .map(|(p, q)| wealth * (weight * p + (1.0 - weight) * q))
            .collect()
    };
    let position = blend(&|c| c.position.clone());
    let flat = blend(&|c| {
        c.successors
            .iter()
            .flat_map(|s| [s.neg_mean, s.risk])
            .collect()
    });
    let successors = flat
        .chunks(2)
        .map(|p| MeanRiskProfile::new(p[0], p[1]))
        .collect();
    Ok(PolyhedralStep {
        position,
        successors,
        left,
        weight,
    })
}

/// Minimizes the objectives in order over `lp`, each inside the optimal
/// face of the previous ones.
fn lexicographic_min(lp: &LinearProgram, order: &[&[f64]]) -> Result<Option<Vec<f64>>> {
    let mut engine = Simplex::new(lp)?;
    if !engine.find_feasible()? {
        return Ok(None);
    }
    for (level, c) in order.iter().enumerate() {
        if level > 0 {
            engine.fix_to_optimal_face();
        }
        if engine.optimize(c)? != LpStatus::Optimal {
            return Err(Error::Solver("scalar one-step problem is unbounded".into()));
        }
    }
    Ok(Some(engine.solution()))
}

/// Minimum risk subject to `−E ≤ neg_mean`, at a node holding `wealth`.
///
/// The returned position is in units of the node's own assets and the
/// successors are in branch order.
#[allow(clippy::too_many_arguments)]
pub fn solve_induction_lp(
    prices: &[f64],
    child_prices: &[Vec<f64>],
    probs: &[f64],
    next_images: &[&UpperImage],
    spec: &RiskSpec,
    wealth: f64,
    neg_mean: f64,
) -> Result<FrontierColumn> {
    if !(wealth > 0.0) {
        return Err(Error::Domain(format!("wealth {wealth} must be positive")));
    }
    let vlp = assemble_one_step_vlp(prices, child_prices, probs, next_images, spec, wealth)?;
    let [c1, c2] = &vlp.problem.objectives;
    let coeffs: Vec<(usize, f64)> = c1
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| (j, *c))
        .collect();
    let tie = vlp.successor_sum();
    // exact target first; a relative slack absorbs drift at the frontier's end
    for slack in [0.0, 1e-10] {
        let mut lp = vlp.problem.constraints.clone();
        lp.add_row(
            coeffs.clone(),
            Sense::Le,
            neg_mean + slack * (1.0 + neg_mean.abs()),
        );
        if let Some(x) = lexicographic_min(&lp, &[c2, c1, &tie])? {
            return Ok(vlp.column(&x));
        }
    }
    let lo = lexicographic_min(&vlp.problem.constraints, &[c1, c2])?
        .map(|x| crate::lp::dot(c1, &x))
        .unwrap_or(f64::NAN);
    Err(Error::Range {
        what: "expected-value constraint".into(),
        value: neg_mean,
        lo,
        hi: f64::INFINITY,
    })
}

/// Interval of weights `λ` on risk for which `point` minimizes
/// `(1 − λ)·neg_mean + λ·risk` over the image.
pub fn moving_scalarization(image: &UpperImage, point: MeanRiskProfile) -> Result<[f64; 2]> {
    let a = image.vertices();
    let k = a.len();
    let p = point.as_array();
    let scale = 1.0 + p[0].abs().max(p[1].abs());
    let tol = 1e-7 * scale;
    let (lo, hi) = image.neg_mean_range();
    let on_frontier = p[0] >= lo - tol
        && p[0] <= hi + tol
        && image
            .risk_at(p[0].clamp(lo, hi))
            .is_some_and(|r| (r - p[1]).abs() <= tol);
    if !on_frontier {
        return Err(Error::Domain(format!(
            "point ({}, {}) is not on the frontier",
            p[0], p[1]
        )));
    }
    let edge = |i: usize| {
        let d1 = a[i + 1][0] - a[i][0];
        let d2 = a[i + 1][1] - a[i][1];
        d1 / (d1 - d2)
    };
    let near = |i: usize| (a[i][0] - p[0]).abs() <= 1e-12 * scale;
    if let Some(i) = (0..k).find(|&i| near(i)) {
        let l = if i == 0 { 0.0 } else { edge(i - 1) };
        let h = if i + 1 == k { 1.0 } else { edge(i) };
        return Ok([l, h]);
    }
    let i = a.partition_point(|x| x[0] <= p[0]) - 1;
    let l = edge(i);
    Ok([l, l])
}

/// One step of a realized path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub t: usize,
    /// Node id on explicit trees.
    pub node: Option<usize>,
    pub wealth: f64,
    /// Units held of each asset after rebalancing at `t`.
    pub position: Vec<f64>,
    /// Mean-risk profile of the continuation from this node.
    pub profile: MeanRiskProfile,
    /// Scalarization weights consistent with `profile`.
    pub lambda: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// Branch taken at each time.
    pub branches: Vec<usize>,
    pub records: Vec<TradeRecord>,
    pub terminal_wealth: f64,
}

/// How each forward step is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMethod {
    /// Blend of precomputed frontier columns.
    Polyhedral,
    /// Scalar LP against the next-period images.
    InductionLp,
}

/// Decision at one node for wealth `v` and mean target `x₁`.
#[derive(Clone, Debug)]
pub struct NodeDecision {
    /// Units of the node's assets.
    pub position: Vec<f64>,
    /// Successor profiles in branch order.
    pub successors: Vec<MeanRiskProfile>,
}

fn image_at<'a>(
    sol: &'a BackwardSolution,
    terminal: &'a UpperImage,
    at: &NodeCursor,
) -> Result<&'a UpperImage> {
    if at.time >= sol.horizon() {
        Ok(terminal)
    } else {
        Ok(&sol.frontier_at(at)?.image)
    }
}

/// Position and successor profiles at the node under `at`.
#[allow(clippy::too_many_arguments)]
pub fn decide(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    at: &NodeCursor,
    wealth: f64,
    neg_mean: f64,
    method: ForwardMethod,
) -> Result<NodeDecision> {
    let k = tree.branching(at);
    match method {
        ForwardMethod::Polyhedral => {
            let f = sol.frontier_at(at)?;
            let step = forward_step_polyhedral(&f.image, &f.columns, wealth, neg_mean)?;
            let position = step
                .position
                .iter()
                .zip(&f.ref_prices)
                .zip(&at.prices)
                .map(|((psi, r), s)| psi * r / s)
                .collect();
            let shared = sol.stages[at.time].shared;
            let successors = (0..k)
                .map(|b| {
                    let slot = if shared { tree.scenario_of(at, b) } else { b };
                    step.successors[slot]
                })
                .collect();
            Ok(NodeDecision {
                position,
                successors,
            })
        }
        ForwardMethod::InductionLp => {
            let terminal = terminal_upper_image();
            let children: Vec<NodeCursor> =
                (0..k).map(|b| tree.step(at, b)).collect::<Result<_>>()?;
            let images: Vec<&UpperImage> = children
                .iter()
                .map(|c| image_at(sol, &terminal, c))
                .collect::<Result<_>>()?;
            let col = solve_induction_lp(
                &at.prices,
                &tree.child_prices(at),
                &tree.child_probs(at),
                &images,
                spec,
                wealth,
                neg_mean,
            )?;
            Ok(NodeDecision {
                position: col.position,
                successors: col.successors,
            })
        }
    }
}

/// Frontier risk at `neg_mean` for wealth `v`, clamping tiny overshoots.
fn frontier_risk(unit: &UpperImage, wealth: f64, neg_mean: f64) -> f64 {
    let (lo, hi) = unit.neg_mean_range();
    wealth
        * unit
            .risk_at((neg_mean / wealth).clamp(lo, hi))
            .expect("clamped")
}

/// Profile the continuation attains at `at`: each child follows the
/// efficient strategy for its carried mean, so its profile is its frontier
/// point at that mean, and one step of the recursion composes them.
pub fn realized_profile(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    at: &NodeCursor,
    decision: &NodeDecision,
) -> Result<MeanRiskProfile> {
    let terminal = terminal_upper_image();
    let k = tree.branching(at);
    let mut kids = Vec::with_capacity(k);
    for b in 0..k {
        let child = tree.step(at, b)?;
        let w: f64 = child
            .prices
            .iter()
            .zip(&decision.position)
            .map(|(s, p)| s * p)
            .sum();
        let m = decision.successors[b].neg_mean;
        let image = image_at(sol, &terminal, &child)?;
        kids.push(MeanRiskProfile::new(m, frontier_risk(image, w, m)));
    }
    Ok(one_step_profile(spec, &tree.child_probs(at), &kids))
}

/// Efficient strategy along `branches`, starting from the frontier point `x0`.
pub fn forward_strategy_path(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    v0: f64,
    x0: MeanRiskProfile,
    branches: &[usize],
) -> Result<PathOutcome> {
    forward_strategy_path_with(tree, sol, spec, v0, x0, branches, ForwardMethod::Polyhedral)
}

#[allow(clippy::too_many_arguments)]
pub fn forward_strategy_path_with(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    v0: f64,
    x0: MeanRiskProfile,
    branches: &[usize],
    method: ForwardMethod,
) -> Result<PathOutcome> {
    let horizon = tree.horizon();
    if sol.horizon() != horizon {
        return Err(Error::Usage("stage solutions do not match the tree".into()));
    }
    if branches.len() != horizon {
        return Err(Error::Usage(format!(
            "path has {} steps, horizon is {horizon}",
            branches.len()
        )));
    }
    if !(v0 > 0.0) {
        return Err(Error::Parameter(format!(
            "initial wealth {v0} must be positive"
        )));
    }
    let mut at = tree.root();
    let mut wealth = v0;
    let mut neg_mean = x0.neg_mean;
    let mut records = Vec::with_capacity(horizon);
    for &b in branches {
        let decision = decide(tree, sol, spec, &at, wealth, neg_mean, method)?;
        let profile = realized_profile(tree, sol, spec, &at, &decision)?;
        let unit = &sol.frontier_at(&at)?.image;
        let (lo, hi) = unit.neg_mean_range();
        let r = (neg_mean / wealth).clamp(lo, hi);
        let on_frontier = MeanRiskProfile::new(r, unit.risk_at(r).expect("clamped"));
        let lambda = moving_scalarization(unit, on_frontier)?;
        let next = tree.step(&at, b)?;
        let next_wealth: f64 = next
            .prices
            .iter()
            .zip(&decision.position)
            .map(|(s, p)| s * p)
            .sum();
        records.push(TradeRecord {
            t: at.time,
            node: at.id,
            wealth,
            position: decision.position,
            profile,
            lambda,
        });
        neg_mean = decision.successors[b].neg_mean;
        wealth = next_wealth;
        at = next;
    }
    Ok(PathOutcome {
        branches: branches.to_vec(),
        records,
        terminal_wealth: wealth,
    })
}

/// Converts a root-to-leaf node-id sequence of an explicit tree to branch indices.
pub fn branches_from_node_ids(tree: &ScenarioTree, ids: &[usize]) -> Result<Vec<usize>> {
    let nodes = tree
        .nodes()
        .ok_or_else(|| Error::Usage("node ids need an explicit tree".into()))?;
    if ids.len() != tree.horizon() + 1 || ids.first() != Some(&0) {
        return Err(Error::Usage("path must run from the root to a leaf".into()));
    }
    ids.windows(2)
        .map(|w| {
            let parent = nodes
                .get(w[0])
                .ok_or_else(|| Error::Usage(format!("no node {}", w[0])))?;
            parent
                .children
                .iter()
                .position(|&c| c == w[1])
                .ok_or_else(|| Error::Usage(format!("node {} is not a child of {}", w[1], w[0])))
        })
        .collect()
}

/// Efficient positions at every non-terminal node of an explicit tree,
/// indexed by node id.
pub fn full_tree_positions(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    v0: f64,
    x0: MeanRiskProfile,
    method: ForwardMethod,
) -> Result<Vec<Vec<f64>>> {
    let nodes = tree
        .nodes()
        .ok_or_else(|| Error::Usage("full-tree positions need an explicit tree".into()))?;
    let inner = tree.level_start(tree.horizon());
    let mut state = vec![(0.0, 0.0); inner];
    let mut positions = vec![Vec::new(); inner];
    state[0] = (v0, x0.neg_mean);
    for id in 0..inner {
        let at = tree.cursor(id);
        let (wealth, neg_mean) = state[id];
        let d = decide(tree, sol, spec, &at, wealth, neg_mean, method)?;
        for (b, &c) in nodes[id].children.iter().enumerate() {
            if c < inner {
                let w = nodes[c]
                    .prices
                    .iter()
                    .zip(&d.position)
                    .map(|(s, p)| s * p)
                    .sum();
                state[c] = (w, d.successors[b].neg_mean);
            }
        }
        positions[id] = d.position;
    }
    Ok(positions)
}

/// Wealth at every node and profiles of the terminal wealth for positions
/// held at every non-terminal node (indexed by node id). Fails if a position
/// is not self-financing or not long-only.
pub fn evaluate_positions(
    tree: &ScenarioTree,
    spec: &RiskSpec,
    v0: f64,
    positions: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<MeanRiskProfile>)> {
    let nodes = tree
        .nodes()
        .ok_or_else(|| Error::Usage("position evaluation needs an explicit tree".into()))?;
    let inner = tree.level_start(tree.horizon());
    if positions.len() != inner {
        return Err(Error::Strategy(format!(
            "{} positions for {inner} non-terminal nodes",
            positions.len()
        )));
    }
    let mut wealth = vec![0.0; nodes.len()];
    wealth[0] = v0;
    for n in nodes {
        if let Some(p) = n.parent {
            wealth[n.id] = n.prices.iter().zip(&positions[p]).map(|(s, q)| s * q).sum();
        }
        if n.id < inner {
            let psi = &positions[n.id];
            if psi.len() != tree.assets() || psi.iter().any(|q| *q < -1e-12) {
                return Err(Error::Strategy(format!(
                    "node {}: position not long-only",
                    n.id
                )));
            }
            let value: f64 = n.prices.iter().zip(psi).map(|(s, q)| s * q).sum();
            if (value - wealth[n.id]).abs() > 1e-9 * (1.0 + wealth[n.id].abs()) {
                return Err(Error::Strategy(format!(
                    "node {}: position worth {value} but wealth is {}",
                    n.id, wealth[n.id]
                )));
            }
        }
    }
    let leaves = &wealth[inner..];
    let profiles = composed_profile(tree, spec, leaves)?;
    Ok((wealth, profiles))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrategyRule {
    /// One-period mean-risk optimum with fixed weight `λ` on risk.
    Myopic(f64),
    /// Equal value weights.
    Naive,
    /// Given value weights.
    FixedMix(Vec<f64>),
}

/// Rebalancing rule holding fixed value fractions at each node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticStrategy {
    pub rule: StrategyRule,
    /// One weight vector for every node, or one per non-terminal node id.
    weights: Vec<Vec<f64>>,
}

impl StaticStrategy {
    pub fn fixed_mix(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(
                "mix weights must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(StaticStrategy {
            rule: StrategyRule::FixedMix(weights.clone()),
            weights: vec![weights],
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.len() == 1
    }

    /// Value fractions at the node under the cursor.
    pub fn weights_at(&self, at: &NodeCursor) -> &[f64] {
        if self.is_uniform() {
            &self.weights[0]
        } else {
            &self.weights[at.id.expect("per-node strategy on an explicit tree")]
        }
    }

    /// Units held at a node with the given wealth.
    pub fn position_at(&self, at: &NodeCursor, wealth: f64) -> Vec<f64> {
        self.weights_at(at)
            .iter()
            .zip(&at.prices)
            .map(|(w, s)| w * wealth / s)
            .collect()
    }
}

fn myopic_weights(
    prices: &[f64],
    child_prices: &[Vec<f64>],
    probs: &[f64],
    spec: &RiskSpec,
    lambda: f64,
) -> Result<Vec<f64>> {
    let terminal = terminal_upper_image();
    let images = vec![&terminal; child_prices.len()];
    let vlp: OneStepVlp = assemble_one_step_vlp(prices, child_prices, probs, &images, spec, 1.0)?;
    let sol = vlp.problem.solve_weighted([1.0 - lambda, lambda])?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(
            "one-period problem not solved to optimality".into(),
        ));
    }
    let col = vlp.column(&sol.x);
    Ok(col
        .position
        .iter()
        .zip(prices)
        .map(|(q, s)| q * s)
        .collect())
}

/// Repeated one-period optimization of `(1 − λ)·(−E) + λ·CVaR`.
pub fn myopic_strategy(
    tree: &ScenarioTree,
    lambda: f64,
    spec: &RiskSpec,
) -> Result<StaticStrategy> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "myopic weight {lambda} not in [0, 1]"
        )));
    }
    let weights = if let Some(model) = tree.return_model() {
        let unit = vec![1.0; tree.assets()];
        vec![myopic_weights(
            &unit,
            model.scenarios(),
            model.probs(),
            spec,
            lambda,
        )?]
    } else {
        let inner = tree.level_start(tree.horizon());
        (0..inner)
            .into_par_iter()
            .map(|id| {
                let at = tree.cursor(id);
                myopic_weights(
                    &at.prices,
                    &tree.child_prices(&at),
                    &tree.child_probs(&at),
                    spec,
                    lambda,
                )
            })
            .collect::<Result<_>>()?
    };
    Ok(StaticStrategy {
        rule: StrategyRule::Myopic(lambda),
        weights,
    })
}

/// Equal value weights at every node.
pub fn naive_strategy(tree: &ScenarioTree) -> StaticStrategy {
    let d = tree.assets();
    StaticStrategy {
        rule: StrategyRule::Naive,
        weights: vec![vec![1.0 / d as f64; d]],
    }
}

/// Root profile `(−E₀, ρ₀)` of the terminal wealth reached from `v0`.
///
/// Explicit trees are simulated node by node. On an implicit i.i.d. lattice
/// the profile for unit wealth obeys `g_t = Γ(G · g_{t+1})` with the
/// one-step growth `G = πᵀR`, so only one profile per level is needed.
pub fn evaluate_strategy(
    tree: &ScenarioTree,
    strategy: &StaticStrategy,
    spec: &RiskSpec,
    v0: f64,
) -> Result<MeanRiskProfile> {
    if !(v0 >= 0.0) {
        return Err(Error::Domain(format!("initial wealth {v0} is negative")));
    }
    if strategy.weights.iter().any(|w| w.len() != tree.assets()) {
        return Err(Error::Strategy(
            "strategy weights do not match the asset count".into(),
        ));
    }
    if tree.is_explicit() {
        let inner = tree.level_start(tree.horizon());
        if !strategy.is_uniform() && strategy.weights.len() != inner {
            return Err(Error::Strategy(
                "per-node weights do not match the tree".into(),
            ));
        }
        let nodes = tree.nodes().expect("explicit");
        let mut wealth = vec![0.0; nodes.len()];
        let mut positions = vec![Vec::new(); inner];
        wealth[0] = v0;
        for n in &nodes[..inner] {
            let psi = strategy.position_at(&tree.cursor(n.id), wealth[n.id]);
            for &c in &n.children {
                wealth[c] = nodes[c].prices.iter().zip(&psi).map(|(s, q)| s * q).sum();
            }
            positions[n.id] = psi;
        }
        let (_, profiles) = evaluate_positions(tree, spec, v0, &positions)?;
        return Ok(profiles[0]);
    }
    if !strategy.is_uniform() {
        return Err(Error::Usage("per-node strategy on an implicit tree".into()));
    }
    let model = tree.return_model().expect("implicit trees are i.i.d.");
    let growth: Vec<f64> = model
        .scenarios()
        .iter()
        .map(|r| r.iter().zip(&strategy.weights[0]).map(|(g, w)| g * w).sum())
        .collect();
    let probs = model.probs();
    let mut g = [-1.0, -1.0];
    let mut payoffs = vec![0.0; growth.len()];
    for _ in 0..tree.horizon() {
        let m: f64 = growth.iter().zip(probs).map(|(gc, p)| p * gc * g[0]).sum();
        for (y, gc) in payoffs.iter_mut().zip(&growth) {
            *y = -gc * g[1];
        }
        g = [m, cvar(spec.alpha(), &payoffs, probs)];
    }
    Ok(MeanRiskProfile::new(v0 * g[0], v0 * g[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{backward_recursion, scale_upper_image, FrontierColumn};
    use crate::lp::FrontierOptions;
    use crate::tree::{build_binomial, build_iid_tree, BinomialMarket, ReturnModel};

    fn micro() -> ScenarioTree {
        build_binomial(&BinomialMarket {
            stock_annual_mean: 1.1,
            bond_annual_rate: 1.0,
            stock_up: 1.3,
            stock_down: 0.9,
            up_prob: 0.5,
            periods_per_year: 1,
            years: 1.0,
        })
        .unwrap()
    }

    fn micro_image() -> UpperImage {
        UpperImage::new(vec![[-110.0, -90.0], [-100.0, -100.0]]).unwrap()
    }

    #[test]
    fn target_parsing() {
        let t: ProfileTarget = "target_mean=160".parse().unwrap();
        assert_eq!(t, ProfileTarget::target_mean(160.0));
        assert_eq!(t.to_string(), "target_mean=160");
        assert!("volatility=1".parse::<ProfileTarget>().is_err());
        assert!("risk_budget".parse::<ProfileTarget>().is_err());
    }

    #[test]
    fn initial_profile_selection() {
        let p = micro_image();
        let x = select_initial_profile(&p, &ProfileTarget::target_mean(105.0)).unwrap();
        assert!((x.neg_mean + 105.0).abs() < 1e-12 && (x.risk + 95.0).abs() < 1e-12);
        let x = select_initial_profile(&p, &ProfileTarget::risk_budget(-95.0)).unwrap();
        assert!((x.neg_mean + 105.0).abs() < 1e-12);
        let x = select_initial_profile(&p, &ProfileTarget::risk_aversion(1.0)).unwrap();
        assert_eq!(x.as_array(), [-100.0, -100.0]);
        let x = select_initial_profile(&p, &ProfileTarget::risk_aversion(0.0)).unwrap();
        assert_eq!(x.as_array(), [-110.0, -90.0]);
        // the edge normal weight ties both vertices; the lower-risk one wins
        let x = select_initial_profile(&p, &ProfileTarget::risk_aversion(0.5)).unwrap();
        assert_eq!(x.as_array(), [-100.0, -100.0]);
        match select_initial_profile(&p, &ProfileTarget::target_mean(120.0)) {
            Err(Error::Range { lo, hi, .. }) => assert_eq!((lo, hi), (100.0, 110.0)),
            other => panic!("{other:?}"),
        }
    }

    fn two_columns() -> (UpperImage, Vec<FrontierColumn>) {
        let image = UpperImage::new(vec![[-1.1, -0.9], [-1.0, -1.0]]).unwrap();
        let cols = vec![
            FrontierColumn {
                position: vec![0.0, 1.0],
                successors: vec![
                    MeanRiskProfile::new(-1.3, -1.3),
                    MeanRiskProfile::new(-0.9, -0.9),
                ],
            },
            FrontierColumn {
                position: vec![1.0, 0.0],
                successors: vec![
                    MeanRiskProfile::new(-1.0, -1.0),
                    MeanRiskProfile::new(-1.0, -1.0),
                ],
            },
        ];
        (image, cols)
    }

    #[test]
    fn polyhedral_step_rules() {
        let (image, cols) = two_columns();
        let s = forward_step_polyhedral(&image, &cols, 100.0, -105.0).unwrap();
        assert!((s.weight - 0.5).abs() < 1e-12);
        assert!((s.position[0] - 50.0).abs() < 1e-9 && (s.position[1] - 50.0).abs() < 1e-9);
        let s = forward_step_polyhedral(&image, &cols, 2.0, -2.2).unwrap();
        assert_eq!((s.left, s.weight), (0, 1.0));
        assert_eq!(s.position, vec![0.0, 2.0]);
        // clamped overshoot
        let s = forward_step_polyhedral(&image, &cols, 1.0, -0.99).unwrap();
        assert_eq!(s.left, 1);
        assert!(forward_step_polyhedral(&image, &[], 1.0, -1.0).is_err());
    }

    #[test]
    fn scalarization_intervals() {
        let p = micro_image();
        assert_eq!(
            moving_scalarization(&p, MeanRiskProfile::new(-105.0, -95.0)).unwrap(),
            [0.5, 0.5]
        );
        let top = moving_scalarization(&p, MeanRiskProfile::new(-110.0, -90.0)).unwrap();
        assert_eq!(top, [0.0, 0.5]);
        let bottom = moving_scalarization(&p, MeanRiskProfile::new(-100.0, -100.0)).unwrap();
        assert_eq!(bottom, [0.5, 1.0]);
        assert!(matches!(
            moving_scalarization(&p, MeanRiskProfile::new(-105.0, -90.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn micro_fixture_forward() {
        let tree = micro();
        let spec = RiskSpec::new(0.5).unwrap();
        let sol = backward_recursion(&tree, &spec, &FrontierOptions::default()).unwrap();
        let p0 = scale_upper_image(sol.root_image(), 100.0).unwrap();
        let x0 = select_initial_profile(&p0, &ProfileTarget::risk_aversion(0.0)).unwrap();
        for b in 0..2 {
            let out = forward_strategy_path(&tree, &sol, &spec, 100.0, x0, &[b]).unwrap();
            let r = &out.records[0];
            assert!(r.position[0].abs() < 1e-9 && (r.position[1] - 100.0).abs() < 1e-9);
            assert!((r.profile.neg_mean + 110.0).abs() < 1e-9);
            assert!((r.profile.risk + 90.0).abs() < 1e-9);
            assert_eq!(r.lambda[0], 0.0);
            let expected = if b == 0 { 130.0 } else { 90.0 };
            assert!((out.terminal_wealth - expected).abs() < 1e-9);
        }
        assert!(forward_strategy_path(&tree, &sol, &spec, 100.0, x0, &[2]).is_err());
        assert!(forward_strategy_path(&tree, &sol, &spec, 100.0, x0, &[0, 0]).is_err());
    }

    #[test]
    fn deterministic_market_forward() {
        let model = ReturnModel::deterministic(vec![1.01, 1.03]).unwrap();
        let tree = build_iid_tree(&model, 4).unwrap();
        let spec = RiskSpec::new(0.2).unwrap();
        let sol = backward_recursion(&tree, &spec, &FrontierOptions::default()).unwrap();
        let x0 = select_initial_profile(
            &scale_upper_image(sol.root_image(), 10.0).unwrap(),
            &ProfileTarget::risk_aversion(0.3),
        )
        .unwrap();
        let out = forward_strategy_path(&tree, &sol, &spec, 10.0, x0, &[0; 4]).unwrap();
        assert!((out.terminal_wealth - 10.0 * 1.03f64.powi(4)).abs() < 1e-9);
        for r in &out.records {
            assert!(r.position[0].abs() < 1e-12);
        }
    }

    #[test]
    fn induction_lp_matches_polyhedral_on_micro_fixture() {
        let tree = micro();
        let spec = RiskSpec::new(0.5).unwrap();
        let sol = backward_recursion(&tree, &spec, &FrontierOptions::default()).unwrap();
        let root = tree.root();
        let t = terminal_upper_image();
        let col = solve_induction_lp(
            &root.prices,
            &tree.child_prices(&root),
            &tree.child_probs(&root),
            &[&t, &t],
            &spec,
            100.0,
            -105.0,
        )
        .unwrap();
        let poly = decide(
            &tree,
            &sol,
            &spec,
            &root,
            100.0,
            -105.0,
            ForwardMethod::Polyhedral,
        )
        .unwrap();
        for (a, b) in col.position.iter().zip(&poly.position) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(matches!(
            solve_induction_lp(
                &root.prices,
                &tree.child_prices(&root),
                &tree.child_probs(&root),
                &[&t, &t],
                &spec,
                100.0,
                -120.0
            ),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn baselines() {
        let m = BinomialMarket::from_volatility(1.05, 1.01, 0.2, 4, 2.0);
        let explicit = build_binomial(&m).unwrap();
        let implicit = ScenarioTree::iid_lattice(&m.return_model().unwrap(), 8).unwrap();
        let spec = RiskSpec::new(0.25).unwrap();
        for s in [
            naive_strategy(&explicit),
            StaticStrategy::fixed_mix(vec![0.2, 0.8]).unwrap(),
            myopic_strategy(&explicit, 0.5, &spec).unwrap(),
        ] {
            let a = evaluate_strategy(&explicit, &s, &spec, 100.0).unwrap();
            let b = evaluate_strategy(&implicit, &s, &spec, 100.0).unwrap();
            assert!((a.neg_mean - b.neg_mean).abs() < 1e-9 && (a.risk - b.risk).abs() < 1e-9);
        }
        let bond = StaticStrategy::fixed_mix(vec![1.0, 0.0]).unwrap();
        let p = evaluate_strategy(&implicit, &bond, &spec, 100.0).unwrap();
        assert!((p.neg_mean + 100.0 * 1.01f64.powi(2)).abs() < 1e-9);
        assert_eq!(
            evaluate_strategy(&implicit, &bond, &spec, 0.0)
                .unwrap()
                .as_array(),
            [0.0, 0.0]
        );
        // λ = 0 with a positive premium goes all in the stock, λ = 1 all in the bond
        let w = myopic_strategy(&implicit, 0.0, &spec).unwrap();
        assert!((w.weights_at(&implicit.root())[1] - 1.0).abs() < 1e-12);
        let w = myopic_strategy(&implicit, 1.0, &spec).unwrap();
        assert!((w.weights_at(&implicit.root())[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_financing_violation_detected() {
        let tree = micro();
        let spec = RiskSpec::new(0.5).unwrap();
        assert!(evaluate_positions(&tree, &spec, 1.0, &[vec![0.5, 0.5]]).is_ok());
        assert!(matches!(
            evaluate_positions(&tree, &spec, 1.0, &[vec![0.6, 0.5]]),
            Err(Error::Strategy(_))
        ));
    }

    #[test]
    fn node_id_paths() {
        let tree = micro();
        assert_eq!(branches_from_node_ids(&tree, &[0, 2]).unwrap(), vec![1]);
        assert!(branches_from_node_ids(&tree, &[0, 0]).is_err());
        assert!(branches_from_node_ids(&tree, &[1, 2]).is_err());
    }
}
