//! Conditional expectation, one-step CVaR and their recursive composition
//! over a scenario tree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

/// CVaR level defining the recursive coherent risk measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    alpha: f64,
}

impl RiskSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "CVaR level {alpha} not in (0, 1]"
            )));
        }
        Ok(RiskSpec { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Payoffs at the children of a node with their conditional probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ConditionalDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if values.len() != probs.len() {
            return Err(Error::Parameter(
                "values and probabilities differ in length".into(),
            ));
        }
        if probs.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Parameter("probabilities must be positive".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("probabilities sum to {s}")));
        }
        Ok(ConditionalDistribution { values, probs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Pair `(−E_t, ρ_t)` of negative conditional mean and conditional risk.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanRiskProfile {
    pub neg_mean: f64,
    pub risk: f64,
}

impl MeanRiskProfile {
    pub fn new(neg_mean: f64, risk: f64) -> Self {
        MeanRiskProfile { neg_mean, risk }
    }

    pub fn scaled(self, v: f64) -> Self {
        MeanRiskProfile {
            neg_mean: self.neg_mean * v,
            risk: self.risk * v,
        }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.neg_mean, self.risk]
    }
}

/// `Σ p_i x_i`.
pub fn mean(values: &[f64], probs: &[f64]) -> f64 {
    values.iter().zip(probs).map(|(x, p)| x * p).sum()
}

/// CVaR at level `alpha` of the payoff `values`:
/// `−(1/α) · E[X ; worst α-tail]`, with the boundary atom split fractionally.
pub fn cvar(alpha: f64, values: &[f64], probs: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut remaining = alpha;
    let mut tail = 0.0;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = probs[i].min(remaining);
        tail += take * values[i];
        remaining -= take;
    }
    -tail / alpha
}

pub fn one_step_cvar(spec: &RiskSpec, dist: &ConditionalDistribution) -> f64 {
    cvar(spec.alpha, &dist.values, &dist.probs)
}

pub fn one_step_mean(dist: &ConditionalDistribution) -> f64 {
    mean(&dist.values, &dist.probs)
}

/// One application of `Γ_t(−x)` at a node: `x` are the children's profiles.
pub fn one_step_profile(
    spec: &RiskSpec,
    probs: &[f64],
    children: &[MeanRiskProfile],
) -> MeanRiskProfile {
    let neg_means: Vec<f64> = children.iter().map(|c| c.neg_mean).collect();
    let payoffs: Vec<f64> = children.iter().map(|c| -c.risk).collect();
    MeanRiskProfile {
        neg_mean: mean(&neg_means, probs),
        risk: cvar(spec.alpha, &payoffs, probs),
    }
}

/// Recursive mean-risk profile of a terminal payoff at every node of an
/// explicit tree.
///
/// `terminal[j]` is the payoff at the `j`-th leaf (level `T` order). The
/// result is indexed by node id; the root profile is `(−E_0, ρ_0)`.
pub fn composed_profile(
    tree: &ScenarioTree,
    spec: &RiskSpec,
    terminal: &[f64],
) -> Result<Vec<MeanRiskProfile>> {
    let Some(nodes) = tree.nodes() else {
        return Err(Error::Usage(
            "composed profiles need an explicit tree".into(),
        ));
    };
    let violations = tree.validate();
    if let Some(v) = violations.first() {
        return Err(Error::Parameter(format!("invalid tree: {v}")));
    }
    let horizon = tree.horizon();
    let leaves = tree.level(horizon);
    if terminal.len() != leaves.len() {
        return Err(Error::Parameter(format!(
            "{} terminal values for {} leaves",
            terminal.len(),
            leaves.len()
        )));
    }
    let mut out = vec![MeanRiskProfile::default(); nodes.len()];
    let first_leaf = tree.level_start(horizon);
    for (j, v) in terminal.iter().enumerate() {
        out[first_leaf + j] = MeanRiskProfile::new(-v, -v);
    }
    for t in (0..horizon).rev() {
        let level = tree.level(t);
        let start = tree.level_start(t);
        let compute = |n: &crate::tree::TreeNode| {
            let probs: Vec<f64> = n.children.iter().map(|&c| nodes[c].cond_prob).collect();
            let kids: Vec<MeanRiskProfile> = n.children.iter().map(|&c| out[c]).collect();
            one_step_profile(spec, &probs, &kids)
        };
        let values: Vec<MeanRiskProfile> = if level.len() > 4096 {
            level.par_iter().map(compute).collect()
        } else {
            level.iter().map(compute).collect()
        };
        out[start..start + level.len()].copy_from_slice(&values);
    }
    Ok(out)
}
