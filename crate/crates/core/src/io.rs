//! JSON documents for chain specifications.
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "chains": [
//!     {"P": [[0.9, 0.1], [0.2, 0.8]],
//!      "rewards": [{"x": 0, "y": 0, "dist": {"type": "constant", "c": 1.0}}]},
//!     {"P": [[0.5, 0.5], [0.5, 0.5]], "rewards": []}
//!   ]
//! }
//! ```
//!
//! Transitions without a reward entry pay `Constant(0)` unless the document
//! sets `default_reward`.

use serde::{Deserialize, Serialize};

use crate::chain::{validate_spec, Chain, ChainSpec, Labels, RawChainSpec, RewardDist, RewardEntry, ValidationErrors};

#[derive(Debug, thiserror::Error)]
pub enum SpecIoError {
    #[error("malformed spec document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("spec document must list exactly two chains, found {0}")]
    ChainCount(usize),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDocument {
    #[serde(rename = "P")]
    pub transition: Vec<Vec<f64>>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub n_states: usize,
    pub chains: Vec<ChainDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_reward: Option<RewardDist>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_labels: Vec<String>,
}

impl SpecDocument {
    pub fn into_raw(self) -> Result<RawChainSpec, SpecIoError> {
        let count = self.chains.len();
        let [first, second]: [ChainDocument; 2] = self
            .chains
            .try_into()
            .map_err(|_| SpecIoError::ChainCount(count))?;
        let chain_labels = match (&first.label, &second.label) {
            (None, None) => Vec::new(),
            (a, b) => vec![a.clone().unwrap_or_default(), b.clone().unwrap_or_default()],
        };
        Ok(RawChainSpec {
            n_states: self.n_states,
            transition: [first.transition, second.transition],
            rewards: [first.rewards, second.rewards],
            default_reward: Some(self.default_reward.unwrap_or_default()),
            labels: Labels {
                chains: chain_labels,
                states: self.state_labels,
            },
        })
    }

    /// Document listing every positive-probability transition's reward.
    pub fn from_spec(spec: &ChainSpec) -> SpecDocument {
        let n = spec.n_states();
        let labels = spec.labels();
        let chains = Chain::BOTH
            .iter()
            .map(|&c| {
                let p = spec.transition(c);
                let mut rewards = Vec::new();
                for x in 0..n {
                    for y in 0..n {
                        if p[(x, y)] > 0.0 {
                            rewards.push(RewardEntry {
                                x,
                                y,
                                dist: spec.reward(c, x, y).clone(),
                            });
                        }
                    }
                }
                ChainDocument {
                    transition: (0..n).map(|x| (0..n).map(|y| p[(x, y)]).collect()).collect(),
                    rewards,
                    label: labels.chains.get(c.index()).cloned(),
                }
            })
            .collect();
        SpecDocument {
            n_states: n,
            chains,
            default_reward: None,
            state_labels: labels.states.clone(),
        }
    }
}

pub fn parse_spec(json: &str) -> Result<ChainSpec, SpecIoError> {
    let doc: SpecDocument = serde_json::from_str(json)?;
    Ok(validate_spec(&doc.into_raw()?)?)
}

pub fn spec_to_json(spec: &ChainSpec) -> String {
    serde_json::to_string_pretty(&SpecDocument::from_spec(spec)).expect("spec documents serialize")
}
