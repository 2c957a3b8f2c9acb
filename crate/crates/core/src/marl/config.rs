#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::TrainError;

/// Observation encoder used by both actor and critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Variant {
    /// Plain MAPPO: MLP over the flat observation / global-state vector.
    #[cfg_attr(feature = "serde", serde(rename = "mappo"))]
    FlatMlp,
    /// Attention-based encoding over entity tokens.
    #[cfg_attr(feature = "serde", serde(rename = "ab-mappo"))]
    Attention,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::FlatMlp => "mappo",
            Variant::Attention => "ab-mappo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mappo" => Some(Variant::FlatMlp),
            "ab-mappo" => Some(Variant::Attention),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Variant::FlatMlp => 0,
            Variant::Attention => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::FlatMlp),
            1 => Some(Variant::Attention),
            _ => None,
        }
    }
}

/// Network sizes shared by actor and critic.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NetConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub init_log_std: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 64,
            heads: 4,
            init_log_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub rollout_len: usize,
    pub n_envs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_value: bool,
    pub normalize_advantages: bool,
    /// Budget in vectorized environment steps (one step of one instance counts once).
    pub total_env_steps: u64,
    pub lr: f64,
    pub max_grad_norm: Option<f64>,
    /// Run an evaluation every this many updates (0 disables).
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many updates; the final update always writes one.
    pub checkpoint_interval: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatches: 4,
            rollout_len: 128,
            n_envs: 16,
            entropy_coef: 0.01,
            value_coef: 0.5,
            clip_value: true,
            normalize_advantages: true,
            total_env_steps: 2_000_000,
            lr: 3e-4,
            max_grad_norm: Some(0.5),
            eval_interval: 10,
            eval_episodes: 5,
            checkpoint_interval: 25,
        }
    }
}

impl PpoConfig {
    pub fn batch_env_steps(&self) -> u64 {
        (self.rollout_len * self.n_envs) as u64
    }

    /// Updates needed to spend the whole budget (at least one).
    pub fn total_updates(&self) -> u64 {
        self.total_env_steps.div_ceil(self.batch_env_steps()).max(1)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field, reason| Err(TrainError::InvalidConfig { field, reason });
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if self.clip_eps.is_nan() || self.clip_eps <= 0.0 {
            return bad("clip_eps", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.rollout_len == 0 || self.n_envs == 0 {
            return bad("rollout_len", "rollout length and env count must be positive");
        }
        if self.minibatches == 0 || !(self.rollout_len * self.n_envs).is_multiple_of(self.minibatches) {
            return bad("minibatches", "must divide rollout_len * n_envs");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if self.max_grad_norm.is_some_and(|m| m.is_nan() || m <= 0.0) {
            return bad("max_grad_norm", "must be positive when set");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval", "must be at least 1");
        }
        Ok(())
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field, reason| Err(TrainError::InvalidConfig { field, reason });
        if self.hidden == 0 {
            return bad("hidden", "must be positive");
        }
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad("embed_dim", "must be a positive multiple of heads");
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std", "must be finite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PpoConfig::default().validate().unwrap();
        NetConfig::default().validate().unwrap();
        assert_eq!(PpoConfig::default().batch_env_steps(), 2048);
    }

    #[test]
    fn invariants_enforced() {
        let c = PpoConfig {
            minibatches: 3,
            ..PpoConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(TrainError::InvalidConfig {
                field: "minibatches",
                ..
            })
        ));
        let c = PpoConfig {
            gamma: 0.0,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        let c = PpoConfig {
            gae_lambda: 1.5,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in [Variant::FlatMlp, Variant::Attention] {
            assert_eq!(Variant::parse(v.as_str()), Some(v));
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
        }
        assert_eq!(Variant::parse("ppo"), None);
    }
}
