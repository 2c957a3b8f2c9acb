//! Episode-level evaluation producing return, delivered parts and collisions.

use alloc::vec::Vec;

use super::policy::{ObsBatch, ACTION_DIM};
use super::{PolicyBundle, TrainError};
use crate::env::{Observation, Scenario, Vec2, WorldState};
use crate::math;
use crate::rng::{streams, DetRng};

/// Anything that maps a joint observation to one action per agent.
pub trait JointPolicy {
    /// Fleet size the policy was built for, when it is tied to one.
    fn n_agents(&self) -> Option<usize> {
        None
    }

    /// `rng` is `None` in deterministic evaluation.
    fn act(
        &mut self,
        scenario: &Scenario,
        state: &WorldState,
        obs: &[Observation],
        rng: Option<&mut DetRng>,
    ) -> Result<Vec<[f64; 2]>, TrainError>;
}

/// The learned actor: Gaussian samples, or the mean when deterministic.
#[derive(Debug, Clone, Copy)]
pub struct BundlePolicy<'a>(pub &'a PolicyBundle);

impl JointPolicy for BundlePolicy<'_> {
    fn n_agents(&self) -> Option<usize> {
        Some(self.0.dims().n_agents)
    }

    fn act(
        &mut self,
        scenario: &Scenario,
        _state: &WorldState,
        obs: &[Observation],
        rng: Option<&mut DetRng>,
    ) -> Result<Vec<[f64; 2]>, TrainError> {
        let dims = self.0.dims();
        if dims.n_agents != scenario.n_agents() || dims.obs_len != scenario.flat_obs_len() {
            return Err(TrainError::AgentCount {
                expected: dims.n_agents,
                found: scenario.n_agents(),
            });
        }
        let sample = self.0.act(&ObsBatch::from_observations(obs), rng)?;
        Ok(sample.actions.chunks_exact(ACTION_DIM).map(|a| [a[0], a[1]]).collect())
    }
}

/// Uniform actions on `[-1, 1]²` from its own stream, regardless of evaluation mode.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: DetRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: DetRng::new(seed, streams::BASELINE),
        }
    }
}

impl JointPolicy for RandomPolicy {
    fn act(
        &mut self,
        scenario: &Scenario,
        _state: &WorldState,
        _obs: &[Observation],
        _rng: Option<&mut DetRng>,
    ) -> Result<Vec<[f64; 2]>, TrainError> {
        Ok((0..scenario.n_agents())
            .map(|_| [self.rng.uniform_in(-1.0, 1.0), self.rng.uniform_in(-1.0, 1.0)])
            .collect())
    }
}

/// Always zero acceleration.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl JointPolicy for ZeroPolicy {
    fn act(
        &mut self,
        scenario: &Scenario,
        _state: &WorldState,
        _obs: &[Observation],
        _rng: Option<&mut DetRng>,
    ) -> Result<Vec<[f64; 2]>, TrainError> {
        Ok(alloc::vec![[0.0; 2]; scenario.n_agents()])
    }
}

/// Hand-written controller reading the true state: carry to storage, otherwise head for the
/// machine that becomes ready soonest, with a damped proportional law.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedPolicy {
    pub kp: f64,
    pub kd: f64,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self { kp: 4.0, kd: 3.0 }
    }
}

impl ScriptedPolicy {
    fn target(scenario: &Scenario, state: &WorldState, i: usize) -> Vec2 {
        let c = scenario.config();
        if state.agents[i].carrying {
            return c.storage_rect.center();
        }
        let p = state.agents[i].position;
        let mut best: Option<(f64, Vec2)> = None;
        for (spec, m) in c.machines.iter().zip(&state.machines) {
            let wait = if m.is_ready() {
                0.0
            } else {
                f64::from(spec.cycle_duration - m.timer) * c.dt * c.v_max
            };
            let cost = wait.max(p.distance(spec.access_point));
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, spec.access_point));
            }
        }
        best.map_or(Vec2::ZERO, |(_, t)| t)
    }
}

impl JointPolicy for ScriptedPolicy {
    fn act(
        &mut self,
        scenario: &Scenario,
        state: &WorldState,
        _obs: &[Observation],
        _rng: Option<&mut DetRng>,
    ) -> Result<Vec<[f64; 2]>, TrainError> {
        Ok((0..scenario.n_agents())
            .map(|i| {
                let a = &state.agents[i];
                let u = (Self::target(scenario, state, i) - a.position) * self.kp - a.velocity * self.kd;
                [u.x.clamp(-1.0, 1.0), u.y.clamp(-1.0, 1.0)]
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    /// Sum over steps of the mean per-agent reward.
    pub total_return: f64,
    pub deliveries: u64,
    pub collisions: u64,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EpisodeRow>,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_deliveries: f64,
    pub mean_collisions: f64,
}

impl EvalReport {
    pub fn episodes(&self) -> usize {
        self.rows.len()
    }

    fn from_rows(rows: Vec<EpisodeRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_return = rows.iter().map(|r| r.total_return).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|r| (r.total_return - mean_return) * (r.total_return - mean_return))
            .sum::<f64>()
            / n;
        Self {
            mean_return,
            std_return: math::sqrt(var),
            mean_deliveries: rows.iter().map(|r| r.deliveries as f64).sum::<f64>() / n,
            mean_collisions: rows.iter().map(|r| r.collisions as f64).sum::<f64>() / n,
            rows,
        }
    }
}

/// Runs `episodes` full episodes. Episode seeds come from the evaluation stream of `seed`; in
/// stochastic mode actions are sampled from the policy-sampling stream of `seed`.
pub fn evaluate(
    policy: &mut dyn JointPolicy,
    scenario: &Scenario,
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<EvalReport, TrainError> {
    let mut seeds = DetRng::new(seed, streams::EVAL);
    let mut sampling = DetRng::new(seed, streams::POLICY_SAMPLING);
    let n = scenario.n_agents() as f64;
    let mut rows = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let ep_seed = seeds.next_u64();
        let (mut state, mut obs) = scenario.reset(ep_seed)?;
        let mut row = EpisodeRow {
            seed: ep_seed,
            total_return: 0.0,
            deliveries: 0,
            collisions: 0,
            steps: 0,
        };
        loop {
            let rng = if deterministic { None } else { Some(&mut sampling) };
            let actions = policy.act(scenario, &state, &obs, rng)?;
            let out = scenario.step(&mut state, &actions);
            row.total_return += out.rewards.iter().sum::<f64>() / n;
            row.deliveries += u64::from(out.info.deliveries_this_step);
            row.collisions += u64::from(out.info.collision_pairs_this_step);
            row.steps = state.step_index;
            obs = out.observations;
            if out.terminated {
                break;
            }
        }
        rows.push(row);
    }
    Ok(EvalReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScenarioConfig;
    use crate::marl::{NetConfig, Variant};

    #[test]
    fn random_policy_reports_counts() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let r = evaluate(&mut RandomPolicy::new(1), &sc, 2, 1, false).unwrap();
        assert_eq!(r.episodes(), 2);
        assert!(r.rows.iter().all(|row| row.steps == 500));
        assert!(r.mean_deliveries >= 0.0 && r.mean_collisions >= 0.0);
    }

    #[test]
    fn deterministic_mode_repeats() {
        let sc = Scenario::new(ScenarioConfig::reduced()).unwrap();
        let p = PolicyBundle::new(&sc, Variant::FlatMlp, NetConfig::default(), 3).unwrap();
        let a = evaluate(&mut BundlePolicy(&p), &sc, 2, 9, true).unwrap();
        let b = evaluate(&mut BundlePolicy(&p), &sc, 2, 9, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_controller_solves_reduced_scenario() {
        let sc = Scenario::new(ScenarioConfig::reduced()).unwrap();
        let r = evaluate(&mut ScriptedPolicy::default(), &sc, 5, 2, true).unwrap();
        assert!(r.rows.iter().all(|row| row.deliveries >= 1), "{r:?}");
    }

    #[test]
    fn report_moments() {
        let rows = [1.0, 3.0]
            .iter()
            .map(|&g| EpisodeRow {
                seed: 0,
                total_return: g,
                deliveries: 2,
                collisions: 1,
                steps: 10,
            })
            .collect();
        let r = EvalReport::from_rows(rows);
        assert_eq!((r.mean_return, r.std_return, r.mean_deliveries), (2.0, 1.0, 2.0));
    }
}
