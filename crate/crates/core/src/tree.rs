//! Finite filtered scenario trees carrying the price process.
//!
//! A tree is either *explicit* (every node materialized, flat array grouped by
//! time) or an *implicit i.i.d. lattice* where only the one-step
//! [`ReturnModel`] is stored. The implicit form exists for horizons where
//! `k^T` nodes cannot be stored; everything that only needs one node per time
//! level (backward recursion, fixed-mix evaluation, walking a single path)
//! works on both.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of materialized nodes.
pub const DEFAULT_NODE_CAP: usize = 2_000_000;

const PROB_TOL: f64 = 1e-12;

/// One-step gross returns with probabilities, the building block of i.i.d. trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnModel {
    scenarios: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl ReturnModel {
    pub fn new(scenarios: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Parameter("return model has no scenarios".into()));
        }
        if scenarios.len() != probs.len() {
            return Err(Error::Parameter(format!(
                "{} scenarios but {} probabilities",
                scenarios.len(),
                probs.len()
            )));
        }
        let d = scenarios[0].len();
        if d == 0 {
            return Err(Error::Parameter("scenarios have no assets".into()));
        }
        for (i, s) in scenarios.iter().enumerate() {
            if s.len() != d {
                return Err(Error::Parameter(format!(
                    "scenario {i} has {} assets, expected {d}",
                    s.len()
                )));
            }
            if let Some(r) = s.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
                return Err(Error::Domain(format!(
                    "scenario {i} has nonpositive gross return {r}"
                )));
            }
        }
        if probs.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Parameter(
                "scenario probabilities must be positive".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Parameter(format!(
                "scenario probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ReturnModel { scenarios, probs })
    }

    /// Single-scenario model: every asset grows by a fixed factor.
    pub fn deterministic(returns: Vec<f64>) -> Result<Self> {
        ReturnModel::new(vec![returns], vec![1.0])
    }

    pub fn scenarios(&self) -> &[Vec<f64>] {
        &self.scenarios
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn assets(&self) -> usize {
        self.scenarios[0].len()
    }

    /// Expected one-step gross return per asset.
    pub fn mean_returns(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.assets()];
        for (s, p) in self.scenarios.iter().zip(&self.probs) {
            for (mi, r) in m.iter_mut().zip(s) {
                *mi += p * r;
            }
        }
        m
    }

    /// Empirical covariance of the one-step gross returns.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let m = self.mean_returns();
        let d = self.assets();
        let mut c = vec![vec![0.0; d]; d];
        for (s, p) in self.scenarios.iter().zip(&self.probs) {
            for i in 0..d {
                for j in 0..d {
                    c[i][j] += p * (s[i] - m[i]) * (s[j] - m[j]);
                }
            }
        }
        c
    }

    pub fn max_return(&self) -> f64 {
        self.scenarios
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// An atom of the filtration at some time, with its price vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub time: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Probability of this node given its parent (1 for the root).
    pub cond_prob: f64,
    pub prices: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Explicit {
    nodes: Vec<TreeNode>,
    /// `level_start[t]..level_start[t + 1]` are the node ids at time `t`.
    level_start: Vec<usize>,
    /// For i.i.d. trees: index of the model scenario that produced each node.
    scenario_of: Vec<usize>,
}

/// Finite scenario tree (explicit) or i.i.d. lattice (implicit).
#[derive(Clone, Debug)]
pub struct ScenarioTree {
    horizon: usize,
    assets: usize,
    iid: Option<ReturnModel>,
    explicit: Option<Explicit>,
}

/// Position in a tree while walking it: time, node id (explicit trees only) and prices.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeCursor {
    pub time: usize,
    pub id: Option<usize>,
    pub prices: Vec<f64>,
}

/// A violated structural or probabilistic invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeViolation {
    Empty,
    RootCount(usize),
    RootProbability {
        node: usize,
        prob: f64,
    },
    BadIndex {
        node: usize,
    },
    NotGroupedByTime {
        node: usize,
    },
    TimeMismatch {
        node: usize,
    },
    LeafBeforeHorizon {
        node: usize,
        time: usize,
    },
    NonPositiveProbability {
        node: usize,
        prob: f64,
    },
    ProbabilitySum {
        node: usize,
        sum: f64,
    },
    PriceDimension {
        node: usize,
        len: usize,
    },
    NonPositivePrice {
        node: usize,
        asset: usize,
        price: f64,
    },
    NotIid {
        node: usize,
    },
    Model(String),
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TreeViolation::*;
        match self {
            Empty => write!(f, "tree has no nodes"),
            RootCount(n) => write!(f, "expected exactly one root, found {n}"),
            RootProbability { node, prob } => {
                write!(
                    f,
                    "root {node} must have time 0 and cond_prob 1 (got {prob})"
                )
            }
            BadIndex { node } => write!(f, "node {node}: id or child/parent index inconsistent"),
            NotGroupedByTime { node } => write!(f, "node {node}: nodes are not grouped by time"),
            TimeMismatch { node } => write!(f, "node {node}: time is not parent time + 1"),
            LeafBeforeHorizon { node, time } => {
                write!(f, "node {node}: leaf at time {time} before the horizon")
            }
            NonPositiveProbability { node, prob } => {
                write!(
                    f,
                    "node {node}: conditional probability {prob} is not positive"
                )
            }
            ProbabilitySum { node, sum } => {
                write!(f, "node {node}: children probabilities sum to {sum}")
            }
            PriceDimension { node, len } => write!(f, "node {node}: price vector has length {len}"),
            NonPositivePrice { node, asset, price } => {
                write!(
                    f,
                    "node {node}: price of asset {asset} is {price}, must be positive"
                )
            }
            NotIid { node } => write!(f, "node {node}: one-step returns differ from the root's"),
            Model(m) => write!(f, "return model: {m}"),
        }
    }
}

fn node_count(k: usize, horizon: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=horizon {
        total = total.saturating_add(level);
        level = level.saturating_mul(k as u128);
    }
    total
}

impl ScenarioTree {
    /// Materializes the full i.i.d. tree. Refuses above `cap` nodes.
    pub fn build_iid_tree(model: &ReturnModel, horizon: usize, cap: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        let needed = node_count(model.len(), horizon);
        if needed > cap as u128 {
            return Err(Error::Size {
                what: format!(
                    "i.i.d. tree with {} branches and horizon {horizon}",
                    model.len()
                ),
                needed,
                cap,
            });
        }
        let d = model.assets();
        let mut nodes = Vec::with_capacity(needed as usize);
        let mut scenario_of = Vec::with_capacity(needed as usize);
        let mut level_start = vec![0usize];
        nodes.push(TreeNode {
            id: 0,
            time: 0,
            parent: None,
            children: Vec::new(),
            cond_prob: 1.0,
            prices: vec![1.0; d],
        });
        scenario_of.push(0);
        for t in 0..horizon {
            let (lo, hi) = (level_start[t], nodes.len());
            level_start.push(hi);
            for parent in lo..hi {
                for (s, (ret, p)) in model.scenarios.iter().zip(&model.probs).enumerate() {
                    let id = nodes.len();
                    let prices = nodes[parent]
                        .prices
                        .iter()
                        .zip(ret)
                        .map(|(a, r)| a * r)
                        .collect();
                    nodes.push(TreeNode {
                        id,
                        time: t + 1,
                        parent: Some(parent),
                        children: Vec::new(),
                        cond_prob: *p,
                        prices,
                    });
                    scenario_of.push(s);
                    nodes[parent].children.push(id);
                }
            }
        }
        level_start.push(nodes.len());
        Ok(ScenarioTree {
            horizon,
            assets: d,
            iid: Some(model.clone()),
            explicit: Some(Explicit {
                nodes,
                level_start,
                scenario_of,
            }),
        })
    }

    /// Implicit i.i.d. lattice: no nodes are stored, root prices are all 1.
    pub fn iid_lattice(model: &ReturnModel, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        Ok(ScenarioTree {
            horizon,
            assets: model.assets(),
            iid: Some(model.clone()),
            explicit: None,
        })
    }

    /// Explicit tree when it fits under `cap`, implicit lattice otherwise.
    pub fn iid(model: &ReturnModel, horizon: usize, cap: usize) -> Result<Self> {
        match Self::build_iid_tree(model, horizon, cap) {
            Err(Error::Size { .. }) => Self::iid_lattice(model, horizon),
            other => other,
        }
    }

    /// Builds a tree from an explicit node list and validates it.
    ///
    /// Node ids must equal their index and nodes must be grouped by time.
    /// The i.i.d. flag is detected from the data.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        let tree = Self::from_nodes_unchecked(nodes);
        let violations = tree.validate();
        if let Some(v) = violations.first() {
            return Err(Error::Parameter(format!(
                "invalid tree ({} violations), first: {v}",
                violations.len()
            )));
        }
        Ok(tree)
    }

    /// Builds the index structures without validating. Use [`validate`](Self::validate)
    /// to obtain diagnostics.
    pub fn from_nodes_unchecked(nodes: Vec<TreeNode>) -> Self {
        let horizon = nodes.iter().map(|n| n.time).max().unwrap_or(0);
        let assets = nodes.first().map(|n| n.prices.len()).unwrap_or(0);
        let mut level_start = vec![0usize; horizon + 2];
        let mut counts = vec![0usize; horizon + 1];
        for n in &nodes {
            counts[n.time] += 1;
        }
        for t in 0..=horizon {
            level_start[t + 1] = level_start[t] + counts[t];
        }
        let mut tree = ScenarioTree {
            horizon,
            assets,
            iid: None,
            explicit: Some(Explicit {
                scenario_of: vec![0; nodes.len()],
                nodes,
                level_start,
            }),
        };
        if tree.structural_violations().is_empty() {
            tree.detect_iid();
        }
        tree
    }

    fn detect_iid(&mut self) {
        let ex = self.explicit.as_ref().expect("explicit");
        let root = &ex.nodes[0];
        if root.children.is_empty() {
            return;
        }
        let child_returns = |n: &TreeNode| -> Vec<(Vec<f64>, f64)> {
            n.children
                .iter()
                .map(|&c| {
                    let ch = &ex.nodes[c];
                    let r = ch
                        .prices
                        .iter()
                        .zip(&n.prices)
                        .map(|(a, b)| a / b)
                        .collect();
                    (r, ch.cond_prob)
                })
                .collect()
        };
        let reference = child_returns(root);
        let mut scenario_of = vec![0usize; ex.nodes.len()];
        for n in &ex.nodes {
            if n.children.is_empty() {
                continue;
            }
            let own = child_returns(n);
            if own.len() != reference.len() {
                return;
            }
            let mut used = vec![false; reference.len()];
            for (pos, (r, p)) in own.iter().enumerate() {
                let hit = reference.iter().enumerate().position(|(j, (rr, pp))| {
                    !used[j]
                        && (p - pp).abs() <= PROB_TOL
                        && r.iter().zip(rr).all(|(a, b)| (a - b).abs() <= PROB_TOL)
                });
                match hit {
                    Some(j) => {
                        used[j] = true;
                        scenario_of[n.children[pos]] = j;
                    }
                    None => return,
                }
            }
        }
        let (scen, probs): (Vec<_>, Vec<_>) = reference.into_iter().unzip();
        if let Ok(model) = ReturnModel::new(scen, probs) {
            self.iid = Some(model);
            self.explicit.as_mut().expect("explicit").scenario_of = scenario_of;
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn is_iid(&self) -> bool {
        self.iid.is_some()
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit.is_some()
    }

    /// The one-step model of an i.i.d. tree.
    pub fn return_model(&self) -> Option<&ReturnModel> {
        self.iid.as_ref()
    }

    pub fn nodes(&self) -> Option<&[TreeNode]> {
        self.explicit.as_ref().map(|e| e.nodes.as_slice())
    }

    /// Node by id; panics on implicit trees or bad ids.
    pub fn node(&self, id: usize) -> &TreeNode {
        &self.explicit.as_ref().expect("explicit tree").nodes[id]
    }

    /// Nodes at time `t` (explicit trees).
    pub fn level(&self, t: usize) -> &[TreeNode] {
        let ex = self.explicit.as_ref().expect("explicit tree");
        &ex.nodes[ex.level_start[t]..ex.level_start[t + 1]]
    }

    pub fn level_start(&self, t: usize) -> usize {
        self.explicit.as_ref().expect("explicit tree").level_start[t]
    }

    /// Number of stored nodes, or the would-be count for implicit lattices.
    pub fn node_count(&self) -> u128 {
        match (&self.explicit, &self.iid) {
            (Some(ex), _) => ex.nodes.len() as u128,
            (None, Some(m)) => node_count(m.len(), self.horizon),
            (None, None) => 0,
        }
    }

    /// Largest one-step gross return over the whole tree.
    pub fn max_one_step_return(&self) -> f64 {
        match &self.explicit {
            Some(ex) => ex
                .nodes
                .iter()
                .filter_map(|n| n.parent.map(|p| (n, &ex.nodes[p])))
                .flat_map(|(n, p)| n.prices.iter().zip(&p.prices).map(|(a, b)| a / b))
                .fold(f64::NEG_INFINITY, f64::max),
            None => self.iid.as_ref().map(|m| m.max_return()).unwrap_or(1.0),
        }
    }

    /// Unconditional probability of a node (product of conditional probabilities).
    pub fn path_probability(&self, id: usize) -> f64 {
        let mut p = 1.0;
        let mut cur = Some(id);
        while let Some(c) = cur {
            let n = self.node(c);
            p *= n.cond_prob;
            cur = n.parent;
        }
        p
    }

    pub fn root(&self) -> NodeCursor {
        match &self.explicit {
            Some(ex) => NodeCursor {
                time: 0,
                id: Some(0),
                prices: ex.nodes[0].prices.clone(),
            },
            None => NodeCursor {
                time: 0,
                id: None,
                prices: vec![1.0; self.assets],
            },
        }
    }

    /// Number of children of the node under the cursor.
    pub fn branching(&self, at: &NodeCursor) -> usize {
        if at.time >= self.horizon {
            return 0;
        }
        match (&self.explicit, at.id) {
            (Some(ex), Some(id)) => ex.nodes[id].children.len(),
            _ => self.iid.as_ref().map(|m| m.len()).unwrap_or(0),
        }
    }

    pub fn child_probs(&self, at: &NodeCursor) -> Vec<f64> {
        match (&self.explicit, at.id) {
            (Some(ex), Some(id)) => ex.nodes[id]
                .children
                .iter()
                .map(|&c| ex.nodes[c].cond_prob)
                .collect(),
            _ => self.iid.as_ref().expect("iid model").probs.clone(),
        }
    }

    /// Price vectors of the children, in branch order.
    pub fn child_prices(&self, at: &NodeCursor) -> Vec<Vec<f64>> {
        match (&self.explicit, at.id) {
            (Some(ex), Some(id)) => ex.nodes[id]
                .children
                .iter()
                .map(|&c| ex.nodes[c].prices.clone())
                .collect(),
            _ => self
                .iid
                .as_ref()
                .expect("iid model")
                .scenarios
                .iter()
                .map(|r| at.prices.iter().zip(r).map(|(s, g)| s * g).collect())
                .collect(),
        }
    }

    /// Moves the cursor to child number `branch`.
    pub fn step(&self, at: &NodeCursor, branch: usize) -> Result<NodeCursor> {
        let k = self.branching(at);
        if branch >= k {
            return Err(Error::Usage(format!(
                "branch {branch} out of range at time {} ({k} children)",
                at.time
            )));
        }
        match (&self.explicit, at.id) {
            (Some(ex), Some(id)) => {
                let c = ex.nodes[id].children[branch];
                Ok(NodeCursor {
                    time: at.time + 1,
                    id: Some(c),
                    prices: ex.nodes[c].prices.clone(),
                })
            }
            _ => {
                let r = &self.iid.as_ref().expect("iid model").scenarios[branch];
                Ok(NodeCursor {
                    time: at.time + 1,
                    id: None,
                    prices: at.prices.iter().zip(r).map(|(s, g)| s * g).collect(),
                })
            }
        }
    }

    /// Index of the i.i.d. model scenario realized by child `branch`.
    /// For non-i.i.d. trees this is just `branch`.
    pub fn scenario_of(&self, at: &NodeCursor, branch: usize) -> usize {
        match (&self.explicit, at.id, &self.iid) {
            (Some(ex), Some(id), Some(_)) => ex.scenario_of[ex.nodes[id].children[branch]],
            _ => branch,
        }
    }

    /// Cursor for an explicit node id.
    pub fn cursor(&self, id: usize) -> NodeCursor {
        let n = self.node(id);
        NodeCursor {
            time: n.time,
            id: Some(id),
            prices: n.prices.clone(),
        }
    }

    fn structural_violations(&self) -> Vec<TreeViolation> {
        let mut out = Vec::new();
        let Some(ex) = &self.explicit else {
            return out;
        };
        let nodes = &ex.nodes;
        if nodes.is_empty() {
            out.push(TreeViolation::Empty);
            return out;
        }
        let roots = nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || nodes[0].parent.is_some() {
            out.push(TreeViolation::RootCount(roots));
        }
        for (i, n) in nodes.iter().enumerate() {
            let bad_child = n
                .children
                .iter()
                .any(|&c| c >= nodes.len() || nodes[c].parent != Some(i));
            let bad_parent = n
                .parent
                .map(|p| p >= nodes.len() || !nodes[p].children.contains(&i))
                .unwrap_or(false);
            if n.id != i || bad_child || bad_parent {
                out.push(TreeViolation::BadIndex { node: i });
            }
            if i > 0 && nodes[i - 1].time > n.time {
                out.push(TreeViolation::NotGroupedByTime { node: i });
            }
        }
        out
    }

    /// Lists every violated invariant; empty iff the tree is valid.
    pub fn validate(&self) -> Vec<TreeViolation> {
        let Some(ex) = &self.explicit else {
            let mut out = Vec::new();
            match &self.iid {
                Some(m) => {
                    if let Err(e) = ReturnModel::new(m.scenarios.clone(), m.probs.clone()) {
                        out.push(TreeViolation::Model(e.to_string()));
                    }
                }
                None => out.push(TreeViolation::Empty),
            }
            return out;
        };
        let mut out = self.structural_violations();
        if !out.is_empty() {
            return out;
        }
        let nodes = &ex.nodes;
        let root = &nodes[0];
        if root.time != 0 || (root.cond_prob - 1.0).abs() > PROB_TOL {
            out.push(TreeViolation::RootProbability {
                node: 0,
                prob: root.cond_prob,
            });
        }
        for n in nodes {
            if !(n.cond_prob > 0.0) {
                out.push(TreeViolation::NonPositiveProbability {
                    node: n.id,
                    prob: n.cond_prob,
                });
            }
            if n.prices.len() != self.assets || n.prices.is_empty() {
                out.push(TreeViolation::PriceDimension {
                    node: n.id,
                    len: n.prices.len(),
                });
            }
            for (a, p) in n.prices.iter().enumerate() {
                if !(*p > 0.0) || !p.is_finite() {
                    out.push(TreeViolation::NonPositivePrice {
                        node: n.id,
                        asset: a,
                        price: *p,
                    });
                }
            }
            if let Some(p) = n.parent {
                if nodes[p].time + 1 != n.time {
                    out.push(TreeViolation::TimeMismatch { node: n.id });
                }
            }
            if n.children.is_empty() {
                if n.time != self.horizon {
                    out.push(TreeViolation::LeafBeforeHorizon {
                        node: n.id,
                        time: n.time,
                    });
                }
            } else {
                let sum: f64 = n.children.iter().map(|&c| nodes[c].cond_prob).sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(TreeViolation::ProbabilitySum { node: n.id, sum });
                }
            }
        }
        out
    }

    /// Line-oriented dump, one node per line: `id time parent cond_prob prices...`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let Some(ex) = &self.explicit else {
            return Err(Error::Usage(
                "implicit i.i.d. lattices have no node list".into(),
            ));
        };
        writeln!(w, "# id time parent cond_prob prices...")?;
        for n in &ex.nodes {
            let parent = n
                .parent
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            write!(w, "{} {} {} {}", n.id, n.time, parent, n.cond_prob)?;
            for p in &n.prices {
                write!(w, " {p}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Validation diagnostics for any tree.
pub fn validate_tree(tree: &ScenarioTree) -> Vec<TreeViolation> {
    tree.validate()
}

/// Parameters of a two-asset binomial market (bond first, stock second).
///
/// Annual quantities are gross factors (`1.05` means 5% per year).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialMarket {
    pub stock_annual_mean: f64,
    pub bond_annual_rate: f64,
    pub stock_up: f64,
    pub stock_down: f64,
    pub up_prob: f64,
    pub periods_per_year: u32,
    pub years: f64,
}

impl BinomialMarket {
    /// Derives per-period up/down factors from an annual volatility with `p = 0.5`,
    /// matching the per-period mean `mean^(1/n)` and standard deviation `vol / sqrt(n)`.
    pub fn from_volatility(
        stock_annual_mean: f64,
        bond_annual_rate: f64,
        annual_volatility: f64,
        periods_per_year: u32,
        years: f64,
    ) -> Self {
        let n = periods_per_year as f64;
        let m = stock_annual_mean.powf(1.0 / n);
        let s = annual_volatility / n.sqrt();
        BinomialMarket {
            stock_annual_mean,
            bond_annual_rate,
            stock_up: m + s,
            stock_down: m - s,
            up_prob: 0.5,
            periods_per_year,
            years,
        }
    }

    pub fn horizon(&self) -> Result<usize> {
        let t = self.periods_per_year as f64 * self.years;
        let r = t.round();
        if r < 1.0 || (t - r).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "periods_per_year * years = {t} is not a positive integer"
            )));
        }
        Ok(r as usize)
    }

    pub fn bond_step_return(&self) -> f64 {
        self.bond_annual_rate
            .powf(1.0 / self.periods_per_year as f64)
    }

    /// Checks the parameters and returns the one-step model.
    pub fn return_model(&self) -> Result<ReturnModel> {
        if self.periods_per_year == 0 {
            return Err(Error::Parameter("periods_per_year must be positive".into()));
        }
        if !(self.up_prob > 0.0 && self.up_prob < 1.0) {
            return Err(Error::Parameter(format!(
                "up probability {} not in (0, 1)",
                self.up_prob
            )));
        }
        if self.stock_down <= 0.0 || self.stock_up <= 0.0 || self.bond_annual_rate <= 0.0 {
            return Err(Error::Domain("binomial returns must be positive".into()));
        }
        if self.stock_annual_mean <= 0.0 {
            return Err(Error::Domain("stock annual mean must be positive".into()));
        }
        if self.stock_down > self.stock_up {
            return Err(Error::Parameter(format!(
                "stock_down {} exceeds stock_up {}",
                self.stock_down, self.stock_up
            )));
        }
        let implied = self.up_prob * self.stock_up + (1.0 - self.up_prob) * self.stock_down;
        let target = self
            .stock_annual_mean
            .powf(1.0 / self.periods_per_year as f64);
        if (implied - target).abs() > 1e-10 {
            return Err(Error::Parameter(format!(
                "per-period mean {implied} of u/d/p does not match {target}"
            )));
        }
        let b = self.bond_step_return();
        if self.stock_up == self.stock_down {
            return ReturnModel::deterministic(vec![b, self.stock_up]);
        }
        ReturnModel::new(
            vec![vec![b, self.stock_up], vec![b, self.stock_down]],
            vec![self.up_prob, 1.0 - self.up_prob],
        )
    }
}

/// Binomial tree; materialized under the default cap, implicit lattice above it.
pub fn build_binomial(market: &BinomialMarket) -> Result<ScenarioTree> {
    build_binomial_with_cap(market, DEFAULT_NODE_CAP)
}

pub fn build_binomial_with_cap(market: &BinomialMarket, cap: usize) -> Result<ScenarioTree> {
    let model = market.return_model()?;
    ScenarioTree::iid(&model, market.horizon()?, cap)
}

/// Explicit i.i.d. tree under the default cap.
pub fn build_iid_tree(model: &ReturnModel, horizon: usize) -> Result<ScenarioTree> {
    ScenarioTree::build_iid_tree(model, horizon, DEFAULT_NODE_CAP)
}

/// Lower-triangular factor `L` with `L Lᵀ = cov`, dropping zero-variance
/// directions. Columns correspond to independent random factors.
fn semidefinite_factor(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    let scale = (0..d).map(|i| cov[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-13 * scale;
    let mut l = vec![vec![0.0; d]; d];
    let mut cols = Vec::new();
    for j in 0..d {
        let mut diag = cov[j][j];
        for k in 0..j {
            diag -= l[j][k] * l[j][k];
        }
        if diag < -tol {
            return Err(Error::Domain(format!(
                "covariance is not positive semidefinite (pivot {diag} at {j})"
            )));
        }
        if diag <= tol {
            for i in j + 1..d {
                let mut s = cov[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if s.abs() > 1e-9 * scale {
                    return Err(Error::Domain(
                        "covariance is not positive semidefinite".into(),
                    ));
                }
            }
            continue;
        }
        let piv = diag.sqrt();
        l[j][j] = piv;
        for i in j + 1..d {
            let mut s = cov[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / piv;
        }
        cols.push(j);
    }
    Ok((0..d)
        .map(|i| cols.iter().map(|&c| l[i][c]).collect())
        .collect())
}

/// Equiprobable scenarios `mean ± L·ε` over all sign vectors `ε`, matching the
/// first two moments exactly. Zero-variance assets (a bond) add no branching.
pub fn moment_matched_scenarios(mean: &[f64], covariance: &[Vec<f64>]) -> Result<ReturnModel> {
    let d = mean.len();
    if d == 0 || covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
        return Err(Error::Parameter(
            "mean/covariance dimensions disagree".into(),
        ));
    }
    for i in 0..d {
        for j in 0..i {
            if (covariance[i][j] - covariance[j][i]).abs() > 1e-12 * (1.0 + covariance[i][j].abs())
            {
                return Err(Error::Domain("covariance is not symmetric".into()));
            }
        }
    }
    let l = semidefinite_factor(covariance)?;
    let factors = l.first().map(|r| r.len()).unwrap_or(0);
    if factors > 20 {
        return Err(Error::Parameter(format!(
            "{factors} random factors is too many"
        )));
    }
    let k = 1usize << factors;
    let mut scenarios = Vec::with_capacity(k);
    for code in 0..k {
        // first factor varies slowest
        let eps: Vec<f64> = (0..factors)
            .map(|f| {
                if code >> (factors - 1 - f) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let s: Vec<f64> = (0..d)
            .map(|i| mean[i] + l[i].iter().zip(&eps).map(|(a, e)| a * e).sum::<f64>())
            .collect();
        if let Some(bad) = s.iter().position(|r| !(*r > 0.0)) {
            return Err(Error::Domain(format!(
                "scenario {code} has nonpositive return {} for asset {bad}: {s:?}",
                s[bad]
            )));
        }
        scenarios.push(s);
    }
    ReturnModel::new(scenarios, vec![1.0 / k as f64; k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> BinomialMarket {
        BinomialMarket {
            stock_annual_mean: 1.1,
            bond_annual_rate: 1.0,
            stock_up: 1.3,
            stock_down: 0.9,
            up_prob: 0.5,
            periods_per_year: 1,
            years: 1.0,
        }
    }

    #[test]
    fn micro_fixture_tree() {
        let tree = build_binomial(&micro()).unwrap();
        assert_eq!(tree.horizon(), 1);
        assert_eq!(tree.assets(), 2);
        assert!(tree.is_iid() && tree.is_explicit());
        let nodes = tree.nodes().unwrap();
        assert_eq!(nodes.len(), 3);
        assert_eq!(nodes[1].prices, vec![1.0, 1.3]);
        assert_eq!(nodes[2].prices, vec![1.0, 0.9]);
        assert_eq!(nodes[1].cond_prob, 0.5);
        assert!(tree.validate().is_empty());
    }

    #[test]
    fn identity_market() {
        let m = BinomialMarket {
            stock_annual_mean: 1.0,
            bond_annual_rate: 1.0,
            stock_up: 1.0,
            stock_down: 1.0,
            up_prob: 0.5,
            periods_per_year: 1,
            years: 1.0,
        };
        let tree = build_binomial(&m).unwrap();
        assert_eq!(tree.horizon(), 1);
        let nodes = tree.nodes().unwrap();
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[1].prices, vec![1.0, 1.0]);
    }

    #[test]
    fn ten_year_daily_binomial_is_implicit() {
        let m = BinomialMarket::from_volatility(1.05, 1.01, 0.05, 250, 10.0);
        let tree = build_binomial(&m).unwrap();
        assert_eq!(tree.horizon(), 2500);
        assert!(!tree.is_explicit());
        let model = tree.return_model().unwrap();
        assert!((model.scenarios()[0][0] - 1.01f64.powf(1.0 / 250.0)).abs() < 1e-15);
        assert!((model.mean_returns()[1] - 1.05f64.powf(1.0 / 250.0)).abs() < 1e-12);
    }

    #[test]
    fn binomial_rejects_inconsistent_mean() {
        let mut m = micro();
        m.stock_up = 1.31;
        assert!(matches!(build_binomial(&m), Err(Error::Parameter(_))));
        let mut m = micro();
        m.stock_down = -0.1;
        m.stock_up = 2.3;
        assert!(matches!(build_binomial(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn all_bond_terminal_wealth_has_no_path_dependence() {
        let m = BinomialMarket::from_volatility(1.05, 1.01, 0.1, 4, 2.0);
        let tree = build_binomial(&m).unwrap();
        let expected = 1.01f64.powf(2.0);
        for leaf in tree.level(tree.horizon()) {
            assert!((leaf.prices[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn iid_tree_counts_and_probabilities() {
        let model = ReturnModel::new(vec![vec![1.0, 1.2], vec![1.0, 0.9]], vec![0.3, 0.7]).unwrap();
        let tree = build_iid_tree(&model, 2).unwrap();
        assert_eq!(tree.nodes().unwrap().len(), 7);
        let total: f64 = tree
            .level(2)
            .iter()
            .map(|n| tree.path_probability(n.id))
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!((tree.path_probability(3) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn deterministic_chain() {
        let model = ReturnModel::deterministic(vec![1.01, 1.02]).unwrap();
        let tree = build_iid_tree(&model, 3).unwrap();
        let nodes = tree.nodes().unwrap();
        assert_eq!(nodes.len(), 4);
        assert!(nodes.iter().all(|n| n.cond_prob == 1.0));
    }

    #[test]
    fn large_iid_tree_refused() {
        let scen: Vec<Vec<f64>> = (0..128)
            .map(|i| vec![1.0, 1.0 + 0.001 * i as f64])
            .collect();
        let model = ReturnModel::new(scen, vec![1.0 / 128.0; 128]).unwrap();
        let err = build_iid_tree(&model, 12).unwrap_err();
        assert!(matches!(err, Error::Size { .. }));
        let lattice = ScenarioTree::iid(&model, 12, DEFAULT_NODE_CAP).unwrap();
        assert!(!lattice.is_explicit());
        assert_eq!(lattice.branching(&lattice.root()), 128);
    }

    #[test]
    fn moment_matching_zero_variance() {
        let m = moment_matched_scenarios(&[1.0], &[vec![0.0]]).unwrap();
        assert_eq!(m.scenarios(), &[vec![1.0]]);
        assert_eq!(m.probs(), &[1.0]);
    }

    #[test]
    fn moment_matching_diagonal() {
        let cov = vec![vec![0.01, 0.0], vec![0.0, 0.01]];
        let m = moment_matched_scenarios(&[1.1, 1.1], &cov).unwrap();
        assert_eq!(m.len(), 4);
        let mut got: Vec<(i64, i64)> = m
            .scenarios()
            .iter()
            .map(|s| ((s[0] * 1e6).round() as i64, (s[1] * 1e6).round() as i64))
            .collect();
        got.sort();
        assert_eq!(
            got,
            vec![
                (1_000_000, 1_000_000),
                (1_000_000, 1_200_000),
                (1_200_000, 1_000_000),
                (1_200_000, 1_200_000)
            ]
        );
        // direct moment computation
        let mean = m.mean_returns();
        let c = m.covariance();
        for i in 0..2 {
            assert!((mean[i] - 1.1).abs() < 1e-12);
            for j in 0..2 {
                assert!((c[i][j] - cov[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_matching_bond_plus_seven() {
        let mut mean = vec![1.001];
        let mut cov = vec![vec![0.0; 8]; 8];
        for i in 1..8 {
            mean.push(1.005 + 0.001 * i as f64);
            for j in 1..8 {
                cov[i][j] = if i == j { 0.0016 } else { 0.0004 };
            }
        }
        let m = moment_matched_scenarios(&mean, &cov).unwrap();
        assert_eq!(m.len(), 128);
        assert!(m.scenarios().iter().all(|s| s[0] == 1.001));
    }

    #[test]
    fn moment_matching_errors() {
        let err = moment_matched_scenarios(&[1.0, 1.0], &[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = moment_matched_scenarios(&[1.0], &[vec![4.0]]);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn diagnostics() {
        let tree = build_binomial(&micro()).unwrap();
        let mut nodes = tree.nodes().unwrap().to_vec();
        nodes[2].cond_prob = 0.4;
        let bad = ScenarioTree::from_nodes_unchecked(nodes);
        let v = bad.validate();
        assert!(v
            .iter()
            .any(|x| matches!(x, TreeViolation::ProbabilitySum { node: 0, sum } if (sum - 0.9).abs() < 1e-12)));

        let mut nodes = tree.nodes().unwrap().to_vec();
        nodes[1].prices[1] = 0.0;
        let v = ScenarioTree::from_nodes_unchecked(nodes).validate();
        assert!(v.iter().any(|x| matches!(
            x,
            TreeViolation::NonPositivePrice {
                node: 1,
                asset: 1,
                ..
            }
        )));
    }

    #[test]
    fn iid_detection_from_nodes() {
        let model = ReturnModel::new(vec![vec![1.0, 1.2], vec![1.0, 0.9]], vec![0.5, 0.5]).unwrap();
        let tree = build_iid_tree(&model, 2).unwrap();
        let mut nodes = tree.nodes().unwrap().to_vec();
        // swap children order of node 2
        nodes[2].children.reverse();
        let t2 = ScenarioTree::from_nodes(nodes.clone()).unwrap();
        assert!(t2.is_iid());
        let c = t2.cursor(2);
        assert_eq!(t2.scenario_of(&c, 0), 1);
        // break i.i.d.
        nodes[6].prices[1] *= 1.01;
        let t3 = ScenarioTree::from_nodes(nodes).unwrap();
        assert!(!t3.is_iid());
    }

    #[test]
    fn dump_format() {
        let tree = build_binomial(&micro()).unwrap();
        let mut buf = Vec::new();
        tree.write_dump(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "0 0 - 1 1 1");
        assert_eq!(lines[2], "1 1 0 0.5 1 1.3");
    }
}
