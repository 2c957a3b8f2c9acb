use alloc::vec::Vec;

use super::{ConfigError, Observation, Scenario, StepInfo, WorldState};
use crate::rng::{streams, DetRng};

/// Totals for one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub env: usize,
    /// Sum over steps of the mean per-agent reward.
    pub total_return: f64,
    pub deliveries: u64,
    pub collisions: u64,
    pub steps: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct Running {
    total_return: f64,
    deliveries: u64,
    collisions: u64,
}

#[derive(Debug, Clone)]
pub struct VecStep {
    /// Flattened `[env, agent]`.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub infos: Vec<StepInfo>,
    pub finished: Vec<EpisodeSummary>,
}

/// `E` independent instances of one scenario, stepped together in instance order.
///
/// Instances that terminate are reset immediately with a seed drawn from their own state, so the
/// observations held after [`VecEnv::step`] always belong to live episodes.
#[derive(Debug, Clone)]
pub struct VecEnv {
    scenario: Scenario,
    states: Vec<WorldState>,
    observations: Vec<Vec<Observation>>,
    running: Vec<Running>,
}

impl VecEnv {
    pub fn new(scenario: Scenario, n_envs: usize, seed: u64) -> Result<Self, ConfigError> {
        let mut seeds = DetRng::new(seed, streams::ENV_RESET);
        let mut states = Vec::with_capacity(n_envs);
        let mut observations = Vec::with_capacity(n_envs);
        for _ in 0..n_envs {
            let (s, o) = scenario.reset(seeds.next_u64())?;
            states.push(s);
            observations.push(o);
        }
        Ok(Self {
            scenario,
            states,
            observations,
            running: alloc::vec![Running::default(); n_envs],
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn n_envs(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[WorldState] {
        &self.states
    }

    /// Current observations, `[env][agent]`.
    pub fn observations(&self) -> &[Vec<Observation>] {
        &self.observations
    }

    pub fn global_states(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| self.scenario.global_state(s)).collect()
    }

    /// Steps every instance with `actions` laid out `[env, agent]`.
    pub fn step(&mut self, actions: &[[f64; 2]]) -> Result<VecStep, ConfigError> {
        let n = self.scenario.n_agents();
        debug_assert_eq!(actions.len(), self.n_envs() * n);
        let mut out = VecStep {
            rewards: Vec::with_capacity(actions.len()),
            dones: Vec::with_capacity(self.n_envs()),
            infos: Vec::with_capacity(self.n_envs()),
            finished: Vec::new(),
        };
        for e in 0..self.n_envs() {
            let outcome = self.scenario.step(&mut self.states[e], &actions[e * n..(e + 1) * n]);
            let run = &mut self.running[e];
            run.total_return += outcome.rewards.iter().sum::<f64>() / n as f64;
            run.deliveries += u64::from(outcome.info.deliveries_this_step);
            run.collisions += u64::from(outcome.info.collision_pairs_this_step);
            out.rewards.extend_from_slice(&outcome.rewards);
            out.dones.push(outcome.terminated);
            if outcome.terminated {
                out.finished.push(EpisodeSummary {
                    env: e,
                    total_return: run.total_return,
                    deliveries: run.deliveries,
                    collisions: run.collisions,
                    steps: self.states[e].step_index,
                });
                *run = Running::default();
                let seed = self.states[e].rng.next_u64();
                let (s, o) = self.scenario.reset(seed)?;
                self.states[e] = s;
                self.observations[e] = o;
            } else {
                self.observations[e] = outcome.observations;
            }
            out.infos.push(outcome.info);
        }
        Ok(out)
    }
}
