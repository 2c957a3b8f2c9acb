//! MAPPO: a parameter-shared Gaussian actor and a centralized critic trained with clipped PPO.
//!
//! The two [`Variant`]s build different encoders but share every other code path: rollout
//! storage, GAE, the update and the evaluator never look at the variant.

mod buffer;
mod config;
mod eval;
pub mod gae;
mod policy;
mod ppo;
mod rollout;
mod trainer;

pub use buffer::RolloutBuffer;
pub use config::{NetConfig, PpoConfig, Variant};
pub use eval::{evaluate, BundlePolicy, EpisodeRow, EvalReport, JointPolicy, RandomPolicy, ScriptedPolicy, ZeroPolicy};
pub use gae::compute_gae;
pub use policy::{EncoderInput, ObsBatch, PolicyBundle, PolicyDims, ACTION_DIM};
pub use ppo::{clipped_policy_loss, ppo_update, MinibatchProbe, UpdateStats};
pub use rollout::{collect_rollout, RolloutStats};
pub use trainer::{Trainer, UpdateRecord};

use crate::env::ConfigError;
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {what} in update {update}, epoch {epoch}, minibatch {minibatch}")]
    NonFinite {
        what: &'static str,
        update: u64,
        epoch: usize,
        minibatch: usize,
    },
    #[error("policy was built for {expected} agents but the scenario has {found}")]
    AgentCount { expected: usize, found: usize },
}
