use super::policy::PolicyDims;
use super::{
    collect_rollout, evaluate, ppo_update, BundlePolicy, EvalReport, NetConfig, PolicyBundle, PpoConfig, RolloutBuffer,
    TrainError, UpdateStats, Variant,
};
use crate::env::{Scenario, VecEnv};
use crate::nn::{Adam, AdamConfig};
use crate::rng::{streams, DetRng};

/// Per-update log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    /// 1-based.
    pub update: u64,
    /// Cumulative vectorized environment steps.
    pub env_steps: u64,
    /// Rollout totals rescaled to one episode length: `sum / (T·E) × max_steps`.
    pub mean_return: f64,
    pub deliveries: f64,
    pub collisions: f64,
    pub episodes_finished: usize,
    pub stats: UpdateStats,
}

/// Collect, estimate advantages, update; repeated until the step budget is spent.
#[derive(Debug, Clone)]
pub struct Trainer {
    scenario: Scenario,
    ppo: PpoConfig,
    policy: PolicyBundle,
    adam: Adam,
    envs: VecEnv,
    buffer: RolloutBuffer,
    sampling: DetRng,
    minibatch: DetRng,
    updates: u64,
}

impl Trainer {
    pub fn new(
        scenario: Scenario,
        ppo: PpoConfig,
        variant: Variant,
        net: NetConfig,
        seed: u64,
    ) -> Result<Self, TrainError> {
        ppo.validate()?;
        let policy = PolicyBundle::new(&scenario, variant, net, seed)?;
        let adam = Adam::new(
            AdamConfig {
                lr: ppo.lr,
                max_grad_norm: ppo.max_grad_norm,
                ..AdamConfig::default()
            },
            policy.store().tensors(),
        );
        let envs = VecEnv::new(scenario.clone(), ppo.n_envs, seed)?;
        let buffer = RolloutBuffer::new(ppo.rollout_len, ppo.n_envs, PolicyDims::of(&scenario));
        Ok(Self {
            scenario,
            policy,
            adam,
            envs,
            buffer,
            sampling: DetRng::new(seed, streams::POLICY_SAMPLING),
            minibatch: DetRng::new(seed, streams::MINIBATCH),
            updates: 0,
            ppo,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ppo(&self) -> &PpoConfig {
        &self.ppo
    }

    pub fn policy(&self) -> &PolicyBundle {
        &self.policy
    }

    pub fn updates_done(&self) -> u64 {
        self.updates
    }

    pub fn total_updates(&self) -> u64 {
        self.ppo.total_updates()
    }

    pub fn is_done(&self) -> bool {
        self.updates >= self.total_updates()
    }

    pub fn env_steps(&self) -> u64 {
        self.updates * self.ppo.batch_env_steps()
    }

    pub fn update(&mut self) -> Result<UpdateRecord, TrainError> {
        let rollout = collect_rollout(&mut self.envs, &self.policy, &mut self.buffer, &mut self.sampling)?;
        self.buffer.compute_gae(self.ppo.gamma, self.ppo.gae_lambda);
        let stats = ppo_update(
            &mut self.policy,
            &mut self.adam,
            &self.buffer,
            &self.ppo,
            &mut self.minibatch,
            self.updates + 1,
        )?;
        self.updates += 1;
        let per_episode = f64::from(self.scenario.config().max_steps) / self.ppo.batch_env_steps() as f64;
        Ok(UpdateRecord {
            update: self.updates,
            env_steps: self.env_steps(),
            mean_return: rollout.mean_agent_reward_sum * per_episode,
            deliveries: rollout.deliveries as f64 * per_episode,
            collisions: rollout.collisions as f64 * per_episode,
            episodes_finished: rollout.finished.len(),
            stats,
        })
    }

    /// Evaluates the current actor on fresh episodes; uses the action means when `deterministic`.
    pub fn evaluate(&self, episodes: usize, seed: u64, deterministic: bool) -> Result<EvalReport, TrainError> {
        evaluate(
            &mut BundlePolicy(&self.policy),
            &self.scenario,
            episodes,
            seed,
            deterministic,
        )
    }
}
