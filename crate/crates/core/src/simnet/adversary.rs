//! Scripted adversaries: share tampering on the wire and theft injection at
//! the meter.

use serde::{Deserialize, Serialize};

use super::{Endpoint, SimError};
use crate::ingest::AttackSpec;

/// Adds `delta` (mod 2^64, before field decoding) to word `word` of the
/// `message_index`-th message received by `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperShare {
    pub target: Endpoint,
    pub message_index: usize,
    #[serde(default)]
    pub word: usize,
    pub delta: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AdversaryAction {
    TamperShare(TamperShare),
    /// Client `client` under-reports according to `attack` before sharing.
    InjectFraud { client: usize, attack: AttackSpec },
}

/// A JSON array of actions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdversaryScript(pub Vec<AdversaryAction>);

impl AdversaryScript {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(format!("adversary script: {e}")))
    }

    pub fn tampers(&self) -> Vec<TamperShare> {
        self.0
            .iter()
            .filter_map(|a| match a {
                AdversaryAction::TamperShare(t) => Some(*t),
                _ => None,
            })
            .collect()
    }

    pub fn frauds(&self) -> Vec<(usize, AttackSpec)> {
        self.0
            .iter()
            .filter_map(|a| match a {
                AdversaryAction::InjectFraud { client, attack } => Some((*client, *attack)),
                _ => None,
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
