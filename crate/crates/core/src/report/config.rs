use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lp::FrontierOptions;
use crate::risk::RiskSpec;
use crate::strategy::ProfileTarget;
use crate::tree::{
    moment_matched_scenarios, BinomialMarket, ReturnModel, ScenarioTree, DEFAULT_NODE_CAP,
};

/// Market description. `model` selects the variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    /// Bond and one stock with binomial returns. Give either `stock_up`,
    /// `stock_down`, `up_prob` or `annual_volatility` (with `up_prob` 0.5).
    Binomial {
        stock_annual_mean: f64,
        bond_annual_rate: f64,
        #[serde(default)]
        stock_up: Option<f64>,
        #[serde(default)]
        stock_down: Option<f64>,
        #[serde(default)]
        up_prob: Option<f64>,
        #[serde(default)]
        annual_volatility: Option<f64>,
        periods_per_year: u32,
        years: f64,
    },
    /// Explicit one-step gross returns, repeated every period.
    Iid {
        scenarios: Vec<Vec<f64>>,
        probs: Vec<f64>,
        horizon: usize,
    },
    /// Equiprobable sign scenarios matching a mean vector and covariance.
    MomentMatched {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        horizon: usize,
    },
}

impl MarketConfig {
    pub fn binomial_market(&self) -> Result<Option<BinomialMarket>> {
        let MarketConfig::Binomial {
            stock_annual_mean,
            bond_annual_rate,
            stock_up,
            stock_down,
            up_prob,
            annual_volatility,
            periods_per_year,
            years,
        } = self
        else {
            return Ok(None);
        };
        let market = match (stock_up, stock_down, annual_volatility) {
            (Some(u), Some(d), None) => BinomialMarket {
                stock_annual_mean: *stock_annual_mean,
                bond_annual_rate: *bond_annual_rate,
                stock_up: *u,
                stock_down: *d,
                up_prob: up_prob.unwrap_or(0.5),
                periods_per_year: *periods_per_year,
                years: *years,
            },
            (None, None, Some(vol)) => {
                if up_prob.is_some_and(|p| p != 0.5) {
                    return Err(Error::Config(
                        "annual_volatility implies up_prob = 0.5".into(),
                    ));
                }
                BinomialMarket::from_volatility(
                    *stock_annual_mean,
                    *bond_annual_rate,
                    *vol,
                    *periods_per_year,
                    *years,
                )
            }
            _ => {
                return Err(Error::Config(
                    "binomial market needs stock_up and stock_down, or annual_volatility".into(),
                ))
            }
        };
        Ok(Some(market))
    }

    pub fn return_model(&self) -> Result<ReturnModel> {
        match self {
            MarketConfig::Binomial { .. } => {
                self.binomial_market()?.expect("binomial").return_model()
            }
            MarketConfig::Iid {
                scenarios, probs, ..
            } => ReturnModel::new(scenarios.clone(), probs.clone()),
            MarketConfig::MomentMatched {
                mean, covariance, ..
            } => moment_matched_scenarios(mean, covariance),
        }
    }

    pub fn horizon(&self) -> Result<usize> {
        match self {
            MarketConfig::Binomial { .. } => self.binomial_market()?.expect("binomial").horizon(),
            MarketConfig::Iid { horizon, .. } | MarketConfig::MomentMatched { horizon, .. } => {
                Ok(*horizon)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Branch-index sequences; replaces sampling when present.
    #[serde(default)]
    pub explicit: Option<Vec<Vec<usize>>>,
}

fn one() -> usize {
    1
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            count: 1,
            seed: 0,
            explicit: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierConfig {
    #[serde(default)]
    pub prune_tol: Option<f64>,
    #[serde(default)]
    pub vertex_budget: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    /// Time levels whose frontiers go into the report; all when absent.
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "half")]
    pub myopic_lambda: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { myopic_lambda: 0.5 }
    }
}

/// Everything a run depends on. Parsed from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub initial_wealth: f64,
    /// `mode=value` with mode `risk_budget`, `target_mean` or `risk_aversion`.
    pub target: String,
    #[serde(default)]
    pub node_cap: Option<usize>,
    pub market: MarketConfig,
    pub risk: RiskConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub frontier: FrontierConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_wealth > 0.0 && self.initial_wealth.is_finite()) {
            return Err(Error::Config(format!(
                "initial_wealth {} must be positive",
                self.initial_wealth
            )));
        }
        RiskSpec::new(self.risk.alpha).map_err(|e| Error::Config(e.to_string()))?;
        self.profile_target()?;
        if self.paths.count == 0 && self.paths.explicit.is_none() {
            return Err(Error::Config("paths.count must be at least 1".into()));
        }
        if self.frontier.prune_tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::Config(
                "frontier.prune_tol must be nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.baselines.myopic_lambda) {
            return Err(Error::Config(
                "baselines.myopic_lambda must lie in [0, 1]".into(),
            ));
        }
        self.market.binomial_market()?;
        Ok(())
    }

    pub fn profile_target(&self) -> Result<ProfileTarget> {
        self.target
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn risk_spec(&self) -> Result<RiskSpec> {
        RiskSpec::new(self.risk.alpha)
    }

    pub fn frontier_options(&self) -> FrontierOptions {
        FrontierOptions {
            prune_tol: self.frontier.prune_tol,
            vertex_budget: self.frontier.vertex_budget,
            ..FrontierOptions::default()
        }
    }

    /// Explicit tree when it fits under the node cap, else the implicit lattice.
    pub fn build_tree(&self) -> Result<ScenarioTree> {
        let model = self.market.return_model()?;
        let horizon = self.market.horizon()?;
        ScenarioTree::iid(&model, horizon, self.node_cap.unwrap_or(DEFAULT_NODE_CAP))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    /// Hash of the inputs the backward recursion depends on.
    pub fn backward_hash(&self) -> String {
        hash_json(&(&self.market, self.node_cap, &self.risk, &self.frontier))
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable");
    hex::encode(Sha256::digest(json.as_bytes()))
}
