//! JSON game-config loading. Numeric fields in the chain section accept plain
//! numbers or exact rational strings like "5/11", converted to f64 at load.

use serde::Deserialize;

use crate::error::ModelError;
use crate::model::{
    ForecastChain, GameG1, LeaderParams, PricingParams, UserSpec, Utility,
};
use crate::pricing::PricingGrid;

/// A number that may be written as a JSON number, a float string, or an
/// exact rational string "a/b".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Float(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Float(v) => Ok(Num(v)),
            Repr::Text(s) => parse_rational(&s)
                .map(Num)
                .ok_or_else(|| serde::de::Error::custom(format!("bad number {s:?}"))),
        }
    }
}

fn parse_rational(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        Some(num / den)
    } else {
        text.parse().ok()
    }
}

fn nums(values: &[Num]) -> Vec<f64> {
    values.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TransitionConfig {
    /// One matrix broadcast to every stage.
    Single(Vec<Vec<Num>>),
    /// One matrix per stage transition (length T-1).
    PerStage(Vec<Vec<Vec<Num>>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ChainConfig {
    predicted: Vec<Num>,
    error_support: Vec<Num>,
    transition: TransitionConfig,
    /// Defaults to uniform over the support.
    #[serde(default)]
    initial_dist: Option<Vec<Num>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PricingConfig {
    alpha: Num,
    beta: Num,
    gamma1: Num,
    gamma2: Num,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct UserConfig {
    #[serde(default)]
    theta: Option<Num>,
    #[serde(default)]
    utility_table: Option<Vec<Num>>,
    d_max: u32,
    c_max: u32,
    b_max: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LeaderConfig {
    unit_cost: Num,
    penalty_weight: Num,
    target: Num,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GridConfig {
    alpha_values: Vec<Num>,
    beta_values: Vec<Num>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DominanceConfig {
    /// One (demand, consumption) pair per stage.
    storage: Vec<(u32, u32)>,
    demand_choices: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GameConfigRepr {
    chain: ChainConfig,
    pricing: PricingConfig,
    users: Vec<UserConfig>,
    #[serde(default)]
    initial_storage: Option<Vec<u32>>,
    #[serde(default)]
    leader: Option<LeaderConfig>,
    #[serde(default)]
    grid: Option<GridConfig>,
    #[serde(default)]
    dominance: Option<DominanceConfig>,
}

/// Storage-dominance audit inputs named in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceSpec {
    pub storage: Vec<(u32, u32)>,
    pub demand_choices: Vec<u32>,
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub game: GameG1,
    pub leader: Option<LeaderParams>,
    pub grid: Option<PricingGrid>,
    pub dominance: Option<DominanceSpec>,
}

/// Errors from reading a config document.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Incomplete(String),
}

/// Parses a JSON config document and validates the game it describes.
pub fn load_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let repr: GameConfigRepr = serde_json::from_str(text)?;

    let predicted = nums(&repr.chain.predicted);
    let support = nums(&repr.chain.error_support);
    let m = support.len();
    let steps = predicted.len().saturating_sub(1);
    let transition = match &repr.chain.transition {
        TransitionConfig::Single(matrix) => {
            let matrix: Vec<Vec<f64>> = matrix.iter().map(|row| nums(row)).collect();
            vec![matrix; steps]
        }
        TransitionConfig::PerStage(list) => list
            .iter()
            .map(|matrix| matrix.iter().map(|row| nums(row)).collect())
            .collect(),
    };
    let initial_dist = match &repr.chain.initial_dist {
        Some(values) => nums(values),
        None => vec![1.0 / m as f64; m],
    };
    let chain = ForecastChain { predicted, error_support: support, transition, initial_dist };

    let mut users = Vec::with_capacity(repr.users.len());
    for (i, user) in repr.users.iter().enumerate() {
        let utility = match (&user.theta, &user.utility_table) {
            (Some(theta), None) => Utility::Linear(theta.0),
            (None, Some(table)) => Utility::Table(nums(table)),
            _ => {
                return Err(ConfigError::Incomplete(format!(
                    "user {i}: give exactly one of theta / utilityTable"
                )))
            }
        };
        users.push(UserSpec { utility, d_max: user.d_max, c_max: user.c_max, b_max: user.b_max });
    }

    let pricing = PricingParams {
        alpha: repr.pricing.alpha.0,
        beta: repr.pricing.beta.0,
        gamma1: repr.pricing.gamma1.0,
        gamma2: repr.pricing.gamma2.0,
    };
    let n = users.len();
    let game = GameG1 {
        chain,
        users,
        pricing,
        initial_storage: repr.initial_storage.clone().unwrap_or_else(|| vec![0; n]),
    };
    game.validate()?;

    let leader = repr.leader.as_ref().map(|l| LeaderParams {
        unit_cost: l.unit_cost.0,
        penalty_weight: l.penalty_weight.0,
        target: l.target.0,
    });
    let grid = match (&repr.grid, &leader) {
        (Some(grid), Some(leader)) => Some(PricingGrid {
            alpha_values: nums(&grid.alpha_values),
            beta_values: nums(&grid.beta_values),
            gamma1: pricing.gamma1,
            gamma2: pricing.gamma2,
            leader: *leader,
        }),
        (Some(_), None) => {
            return Err(ConfigError::Incomplete(
                "grid section needs a leader section for the payoff".into(),
            ))
        }
        _ => None,
    };
    let dominance = repr.dominance.as_ref().map(|d| DominanceSpec {
        storage: d.storage.clone(),
        demand_choices: d.demand_choices.clone(),
    });

    Ok(LoadedConfig { game, leader, grid, dominance })
}

/// Serializes a chain back into the config JSON shape (used by the ingestion
/// front end to emit estimated chains). A transition that is the same matrix
/// at every step collapses to the broadcast form.
pub fn chain_to_json(chain: &ForecastChain) -> serde_json::Value {
    let transition = match chain.transition.first() {
        None => serde_json::Value::Array(Vec::new()),
        Some(first) if chain.transition.iter().all(|m| m == first) => serde_json::json!(first),
        Some(_) => serde_json::json!(chain.transition),
    };
    serde_json::json!({
        "predicted": chain.predicted,
        "errorSupport": chain.error_support,
        "transition": transition,
        "initialDist": chain.initial_dist,
    })
}
