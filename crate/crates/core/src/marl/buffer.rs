use alloc::vec;
use alloc::vec::Vec;

use crate::env::TOKEN_WIDTH;

use super::policy::{ObsBatch, PolicyDims, ACTION_DIM};

/// Trajectory storage indexed `[t, env, agent]` (per-agent arrays) or `[t, env]`.
///
/// Both observation views are stored for every variant so the buffer layout never depends on
/// the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub rollout_len: usize,
    pub n_envs: usize,
    pub n_agents: usize,
    pub dims: PolicyDims,
    pub obs_flat: Vec<f64>,
    pub obs_tokens: Vec<f64>,
    /// `[t, env, global_len]`
    pub global_states: Vec<f64>,
    /// `[t, env, agent, 2]`, as sampled (before the environment clamps them).
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `[t, env]`: the episode ended with step `t`.
    pub dones: Vec<bool>,
    /// `[env, agent]` value of the state after the last step.
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(rollout_len: usize, n_envs: usize, dims: PolicyDims) -> Self {
        let n_agents = dims.n_agents;
        let samples = rollout_len * n_envs * n_agents;
        Self {
            rollout_len,
            n_envs,
            n_agents,
            dims,
            obs_flat: vec![0.0; samples * dims.obs_len],
            obs_tokens: vec![0.0; samples * dims.n_tokens * TOKEN_WIDTH],
            global_states: vec![0.0; rollout_len * n_envs * dims.global_len],
            actions: vec![0.0; samples * ACTION_DIM],
            log_probs: vec![0.0; samples],
            rewards: vec![0.0; samples],
            values: vec![0.0; samples],
            dones: vec![false; rollout_len * n_envs],
            bootstrap_values: vec![0.0; n_envs * n_agents],
            advantages: vec![0.0; samples],
            returns: vec![0.0; samples],
        }
    }

    /// `[T, E, N]`
    pub fn shape(&self) -> [usize; 3] {
        [self.rollout_len, self.n_envs, self.n_agents]
    }

    pub fn n_samples(&self) -> usize {
        self.rollout_len * self.n_envs * self.n_agents
    }

    pub fn sample_index(&self, t: usize, env: usize, agent: usize) -> usize {
        (t * self.n_envs + env) * self.n_agents + agent
    }

    /// Writes step `t`'s observations (`[env, agent]` order) and global states.
    pub fn store_inputs(&mut self, t: usize, obs: &ObsBatch, globals: &[f64]) {
        let per_t = self.n_envs * self.n_agents;
        debug_assert_eq!(obs.batch, per_t);
        let f = self.dims.obs_len;
        let tw = self.dims.n_tokens * TOKEN_WIDTH;
        self.obs_flat[t * per_t * f..(t + 1) * per_t * f].copy_from_slice(&obs.flat);
        self.obs_tokens[t * per_t * tw..(t + 1) * per_t * tw].copy_from_slice(&obs.tokens);
        let gl = self.dims.global_len * self.n_envs;
        self.global_states[t * gl..(t + 1) * gl].copy_from_slice(globals);
    }

    /// Gathers the observations of the given sample indices.
    pub fn gather_obs(&self, samples: &[usize]) -> ObsBatch {
        let f = self.dims.obs_len;
        let tw = self.dims.n_tokens * TOKEN_WIDTH;
        let mut out = ObsBatch {
            batch: samples.len(),
            flat: Vec::with_capacity(samples.len() * f),
            tokens: Vec::with_capacity(samples.len() * tw),
        };
        for &s in samples {
            out.flat.extend_from_slice(&self.obs_flat[s * f..(s + 1) * f]);
            out.tokens.extend_from_slice(&self.obs_tokens[s * tw..(s + 1) * tw]);
        }
        out
    }

    /// Global state of each sample's `(t, env)`.
    pub fn gather_globals(&self, samples: &[usize]) -> Vec<f64> {
        let g = self.dims.global_len;
        let mut out = Vec::with_capacity(samples.len() * g);
        for &s in samples {
            let te = s / self.n_agents;
            out.extend_from_slice(&self.global_states[te * g..(te + 1) * g]);
        }
        out
    }

    /// Episode-end flags expanded to one per sample.
    pub fn sample_dones(&self) -> Vec<bool> {
        self.dones
            .iter()
            .flat_map(|&d| core::iter::repeat_n(d, self.n_agents))
            .collect()
    }

    /// Fills `advantages` and `returns` with GAE.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        let dones = self.sample_dones();
        let (adv, ret) = super::gae::compute_gae(
            &self.rewards,
            &self.values,
            &dones,
            &self.bootstrap_values,
            gamma,
            lambda,
        );
        self.advantages = adv;
        self.returns = ret;
    }
}
