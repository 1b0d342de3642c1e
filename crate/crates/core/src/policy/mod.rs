//! Actor-critic networks, GAE and PPO.

pub mod buffer;
pub mod checkpoint;
pub mod network;
pub mod normalizer;
pub mod ppo;

use serde::{Deserialize, Serialize};

pub use buffer::{gae, normalize_advantages, RolloutBuffer};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use network::{ForwardCache, MlpLayout};
pub use normalizer::RunningNorm;
pub use ppo::{
    gaussian_entropy, gaussian_kl, gaussian_log_prob, ppo_loss, write_stats_csv, ActionSample,
    ActorCritic, Adam, LossTerms, Minibatch, Ppo, PpoConfig, UpdateStats,
};

use crate::error::{PptError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// One weight residual per episode.
    EpisodePromp,
    /// A weight residual every `replan_interval` steps.
    ResidualPrompStep,
    CartesianVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub mode: ActionMode,
    pub dim: usize,
    pub replan_interval: usize,
}

pub const DEFAULT_REPLAN_INTERVAL: usize = 25;

impl ActionSpec {
    pub fn new(mode: ActionMode, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(PptError::InvalidInput("action dimension must be positive".into()));
        }
        if mode == ActionMode::CartesianVelocity && !(3..=4).contains(&dim) {
            return Err(PptError::InvalidInput(format!("velocity actions have 3 or 4 components, got {dim}")));
        }
        Ok(Self {
            mode,
            dim,
            replan_interval: DEFAULT_REPLAN_INTERVAL,
        })
    }

    pub fn check(&self, model: &ActorCritic) -> Result<()> {
        if model.action_dim() != self.dim {
            return Err(PptError::DimensionMismatch { expected: self.dim, got: model.action_dim() });
        }
        Ok(())
    }

    pub fn is_promp(&self) -> bool {
        self.mode != ActionMode::CartesianVelocity
    }
}
