use alloc::vec::Vec;

use super::policy::{ObsBatch, ACTION_DIM};
use super::{PolicyBundle, RolloutBuffer, TrainError};
use crate::env::{EpisodeSummary, VecEnv};
use crate::rng::DetRng;

/// Event totals gathered while filling a buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutStats {
    /// Sum over `(t, env)` of the mean per-agent reward.
    pub mean_agent_reward_sum: f64,
    pub deliveries: u64,
    pub collisions: u64,
    pub finished: Vec<EpisodeSummary>,
}

/// Runs `buffer.rollout_len` vectorized steps, sampling actions from the shared actor and
/// recording one critic value per `(t, env)` for every agent of that instance.
pub fn collect_rollout(
    envs: &mut VecEnv,
    policy: &PolicyBundle,
    buffer: &mut RolloutBuffer,
    rng: &mut DetRng,
) -> Result<RolloutStats, TrainError> {
    let n = buffer.n_agents;
    if envs.scenario().n_agents() != n || policy.dims().n_agents != n {
        return Err(TrainError::AgentCount {
            expected: policy.dims().n_agents,
            found: envs.scenario().n_agents(),
        });
    }
    let mut stats = RolloutStats::default();
    let mut globals = Vec::new();
    let mut actions = Vec::with_capacity(buffer.n_envs * n);
    for t in 0..buffer.rollout_len {
        let obs = ObsBatch::from_observations(envs.observations().iter().flatten());
        global_batch(envs, &mut globals);
        buffer.store_inputs(t, &obs, &globals);

        let sample = policy.act(&obs, Some(rng))?;
        let values = policy.values(&globals)?;
        let base = buffer.sample_index(t, 0, 0);
        let k = buffer.n_envs * n;
        buffer.actions[base * ACTION_DIM..(base + k) * ACTION_DIM].copy_from_slice(&sample.actions);
        buffer.log_probs[base..base + k].copy_from_slice(&sample.log_probs);
        for (e, v) in values.iter().enumerate() {
            buffer.values[base + e * n..base + (e + 1) * n].fill(*v);
        }

        actions.clear();
        actions.extend(sample.actions.chunks_exact(ACTION_DIM).map(|a| [a[0], a[1]]));
        let step = envs.step(&actions)?;
        buffer.rewards[base..base + k].copy_from_slice(&step.rewards);
        buffer.dones[t * buffer.n_envs..(t + 1) * buffer.n_envs].copy_from_slice(&step.dones);
        for (e, info) in step.infos.iter().enumerate() {
            stats.mean_agent_reward_sum += step.rewards[e * n..(e + 1) * n].iter().sum::<f64>() / n as f64;
            stats.deliveries += u64::from(info.deliveries_this_step);
            stats.collisions += u64::from(info.collision_pairs_this_step);
        }
        stats.finished.extend(step.finished);
    }
    global_batch(envs, &mut globals);
    let boot = policy.values(&globals)?;
    for (e, v) in boot.iter().enumerate() {
        buffer.bootstrap_values[e * n..(e + 1) * n].fill(*v);
    }
    Ok(stats)
}

fn global_batch(envs: &VecEnv, out: &mut Vec<f64>) {
    out.clear();
    for s in envs.states() {
        envs.scenario().write_global_state(s, out);
    }
}
