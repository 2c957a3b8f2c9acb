//! Deterministic 2D machine-tending environment.
//!
//! Agents are holonomic point masses with a disc footprint. Machines cycle between
//! `Processing` and `Ready`; a free agent reaching a ready machine's access point picks up the
//! part and carries it to the storage rectangle. One [`Scenario`] drives any number of
//! independent [`WorldState`]s; [`VecEnv`] steps a batch of them with auto-reset.

mod batch;
mod config;
mod geometry;
mod observe;

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{streams, DetRng};

pub use batch::{EpisodeSummary, VecEnv, VecStep};
pub use config::{ConfigError, MachineSpec, ScenarioConfig};
pub use geometry::{Rect, Vec2};
pub use observe::{global_tokens, Observation, ObserveError, TokenKind, PAYLOAD_WIDTH, TOKEN_KINDS, TOKEN_WIDTH};

/// Attempts allowed when rejection-sampling spawn positions.
pub const MAX_SPAWN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub carrying: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachinePhase {
    Processing,
    Ready,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineState {
    pub phase: MachinePhase,
    /// Steps spent processing the current part; meaningless while `Ready`.
    pub timer: u32,
    pub parts_produced: u64,
}

impl MachineState {
    pub fn is_ready(&self) -> bool {
        self.phase == MachinePhase::Ready
    }
}

/// Complete mutable simulation state of one environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub machines: Vec<MachineState>,
    pub delivered_total: u64,
    pub step_index: u32,
    /// Distance of each agent to its current goal, as of the end of the last step.
    pub goal_dist: Vec<f64>,
    /// Generator reserved for episode-level randomness (auto-reset seeds).
    pub rng: DetRng,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub deliveries_this_step: u32,
    pub pickups_this_step: u32,
    /// Agent–agent pairs plus agent–blocker pairs found overlapping this step.
    pub collision_pairs_this_step: u32,
    pub agent_deliveries: Vec<u32>,
    pub agent_pickups: Vec<u32>,
    pub agent_collisions: Vec<u32>,
    /// Shaping component of each agent's reward.
    pub agent_shaping: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
    pub info: StepInfo,
}

/// A validated scenario. Cheap to clone and safe to share read-only between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: ScenarioConfig,
    blockers: Vec<Rect>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let blockers = config.blockers().map(|b| b.inflate(config.agent_radius)).collect();
        Ok(Self { config, blockers })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn n_machines(&self) -> usize {
        self.config.machines.len()
    }

    pub fn flat_obs_len(&self) -> usize {
        5 + 4 * (self.n_agents() - 1) + 4 * self.n_machines() + 2
    }

    pub fn n_tokens(&self) -> usize {
        1 + (self.n_agents() - 1) + self.n_machines() + 1
    }

    pub fn global_state_len(&self) -> usize {
        5 * self.n_agents() + 4 * self.n_machines() + 2 + 1
    }

    /// Number of tokens the global state splits into (agents, machines, storage).
    pub fn n_global_tokens(&self) -> usize {
        self.n_agents() + self.n_machines() + 1
    }

    /// Starts a new episode. Deterministic in `(config, seed)`.
    pub fn reset(&self, seed: u64) -> Result<(WorldState, Vec<Observation>), ConfigError> {
        let c = &self.config;
        let mut rng = DetRng::new(seed, streams::ENV_RESET);
        let mut positions: Vec<Vec2> = Vec::with_capacity(c.n_agents);
        let mut attempts = 0;
        while positions.len() < c.n_agents {
            if attempts == MAX_SPAWN_ATTEMPTS {
                return Err(ConfigError::SpawnExhausted {
                    n_agents: c.n_agents,
                    attempts,
                });
            }
            attempts += 1;
            let s = &c.spawn_rect;
            let p = Vec2::new(rng.uniform_in(s.min.x, s.max.x), rng.uniform_in(s.min.y, s.max.y));
            let clear_of_agents = positions.iter().all(|q| q.distance(p) > 2.0 * c.agent_radius);
            let clear_of_blockers = self.blockers.iter().all(|b| !b.contains_strictly(p));
            let inside = self.wall_bounds().contains(p);
            if clear_of_agents && clear_of_blockers && inside {
                positions.push(p);
            }
        }
        let machines = c
            .machines
            .iter()
            .map(|m| MachineState {
                phase: MachinePhase::Processing,
                timer: rng.below(u64::from(m.cycle_duration)) as u32,
                parts_produced: 0,
            })
            .collect();
        let agents = positions
            .into_iter()
            .map(|position| AgentState {
                position,
                velocity: Vec2::ZERO,
                carrying: false,
            })
            .collect();
        let mut state = WorldState {
            agents,
            machines,
            delivered_total: 0,
            step_index: 0,
            goal_dist: vec![0.0; c.n_agents],
            rng: rng.split(streams::ENV_RESET),
        };
        for i in 0..c.n_agents {
            state.goal_dist[i] = self.goal_distance(&state, i);
        }
        let observations = self.observe_all(&state);
        Ok((state, observations))
    }

    /// Region an agent center may occupy.
    pub fn wall_bounds(&self) -> Rect {
        self.config.arena().inflate(-self.config.agent_radius)
    }

    /// Blockers grown by the agent radius, in configuration order.
    pub fn inflated_blockers(&self) -> &[Rect] {
        &self.blockers
    }

    /// Current goal of agent `i`: storage center when carrying, else the nearest ready machine's
    /// access point, else the arena center.
    pub fn goal(&self, state: &WorldState, i: usize) -> Vec2 {
        let agent = &state.agents[i];
        if agent.carrying {
            return self.config.storage_rect.center();
        }
        let mut best: Option<(f64, Vec2)> = None;
        for (spec, m) in self.config.machines.iter().zip(&state.machines) {
            if m.is_ready() {
                let d = agent.position.distance(spec.access_point);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, spec.access_point));
                }
            }
        }
        best.map_or(Vec2::ZERO, |(_, p)| p)
    }

    pub fn goal_distance(&self, state: &WorldState, i: usize) -> f64 {
        state.agents[i].position.distance(self.goal(state, i))
    }

    /// Advances one step. Actions are clamped to `[-1, 1]²`; missing actions count as zero.
    pub fn step(&self, state: &mut WorldState, actions: &[[f64; 2]]) -> StepOutcome {
        let c = &self.config;
        let n = c.n_agents;
        let mut info = StepInfo {
            agent_deliveries: vec![0; n],
            agent_pickups: vec![0; n],
            agent_collisions: vec![0; n],
            agent_shaping: vec![0.0; n],
            ..StepInfo::default()
        };

        // (1) integrate
        for (i, agent) in state.agents.iter_mut().enumerate() {
            let raw = actions.get(i).copied().unwrap_or([0.0; 2]);
            let a = Vec2::new(sanitize(raw[0]), sanitize(raw[1]));
            let mut v = (agent.velocity + a * (c.a_max * c.dt)) * (1.0 - c.drag);
            let speed = v.norm();
            if speed > c.v_max {
                v = v * (c.v_max / speed);
            }
            agent.velocity = v;
            agent.position += v * c.dt;
        }

        // (2) collisions
        info.collision_pairs_this_step = self.resolve_contacts(&mut state.agents, &mut info.agent_collisions);

        // (3) machine cycles
        for (spec, m) in c.machines.iter().zip(state.machines.iter_mut()) {
            if m.phase == MachinePhase::Processing {
                m.timer += 1;
                if m.timer >= spec.cycle_duration {
                    m.phase = MachinePhase::Ready;
                    m.timer = 0;
                }
            }
        }

        // (4) pickup, lowest agent index wins
        for (spec, m) in c.machines.iter().zip(state.machines.iter_mut()) {
            if !m.is_ready() {
                continue;
            }
            let taker = state
                .agents
                .iter()
                .position(|a| !a.carrying && a.position.distance(spec.access_point) <= spec.pickup_radius);
            if let Some(i) = taker {
                state.agents[i].carrying = true;
                m.phase = MachinePhase::Processing;
                m.timer = 0;
                m.parts_produced += 1;
                info.agent_pickups[i] += 1;
                info.pickups_this_step += 1;
            }
        }

        // (5) delivery
        for (i, agent) in state.agents.iter_mut().enumerate() {
            if agent.carrying && c.storage_rect.contains(agent.position) {
                agent.carrying = false;
                state.delivered_total += 1;
                info.agent_deliveries[i] += 1;
                info.deliveries_this_step += 1;
            }
        }

        // (6) rewards
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let new_dist = self.goal_distance(state, i);
            let shaping = c.w_shaping * (state.goal_dist[i] - new_dist);
            state.goal_dist[i] = new_dist;
            info.agent_shaping[i] = shaping;
            let r = c.r_deliver * f64::from(info.agent_deliveries[i])
                + c.r_pickup * f64::from(info.agent_pickups[i])
                + shaping
                - c.w_collision * f64::from(info.agent_collisions[i])
                - c.w_time;
            rewards.push(r);
        }

        state.step_index += 1;
        let terminated = state.step_index >= c.max_steps;
        StepOutcome {
            observations: self.observe_all(state),
            rewards,
            terminated,
            info,
        }
    }

    /// Positional projection. Returns the number of colliding pairs (agent–agent and
    /// agent–blocker) and adds one event per pair to each involved agent.
    fn resolve_contacts(&self, agents: &mut [AgentState], events: &mut [u32]) -> u32 {
        let r = self.config.agent_radius;
        let min_sep = 2.0 * r;
        let mut pairs = 0;
        let n = agents.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = agents[j].position - agents[i].position;
                let dist = d.norm();
                if dist < min_sep {
                    pairs += 1;
                    events[i] += 1;
                    events[j] += 1;
                    let normal = if dist > 0.0 {
                        d * (1.0 / dist)
                    } else {
                        Vec2::new(1.0, 0.0)
                    };
                    let push = normal * (0.5 * (min_sep - dist));
                    agents[i].position -= push;
                    agents[j].position += push;
                }
            }
        }

        let bounds = self.wall_bounds();
        for (i, agent) in agents.iter_mut().enumerate() {
            for b in &self.blockers {
                if b.contains_strictly(agent.position) {
                    pairs += 1;
                    events[i] += 1;
                    project_out(agent, b, &bounds);
                }
            }
            // Projection out of one blocker can land in a neighbour or past a wall; settle without
            // counting further events.
            for _ in 0..4 {
                clamp_to_walls(agent, &bounds);
                let mut moved = false;
                for b in &self.blockers {
                    if b.contains_strictly(agent.position) {
                        project_out(agent, b, &bounds);
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            clamp_to_walls(agent, &bounds);
        }
        pairs
    }

    pub fn observe(&self, state: &WorldState, agent_index: usize) -> Result<Observation, ObserveError> {
        if agent_index >= self.n_agents() {
            return Err(ObserveError::AgentOutOfRange {
                index: agent_index,
                n_agents: self.n_agents(),
            });
        }
        Ok(observe::build(self, state, agent_index))
    }

    pub fn observe_all(&self, state: &WorldState) -> Vec<Observation> {
        (0..self.n_agents()).map(|i| observe::build(self, state, i)).collect()
    }

    /// Centralized-critic input: every agent's (position, velocity, carrying), every machine's
    /// (access point, ready flag, normalized time-to-ready), the storage center and the
    /// normalized step index.
    pub fn global_state(&self, state: &WorldState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.global_state_len());
        self.write_global_state(state, &mut out);
        out
    }

    pub fn write_global_state(&self, state: &WorldState, out: &mut Vec<f64>) {
        for a in &state.agents {
            out.extend_from_slice(&[a.position.x, a.position.y, a.velocity.x, a.velocity.y, flag(a.carrying)]);
        }
        for (spec, m) in self.config.machines.iter().zip(&state.machines) {
            out.extend_from_slice(&[
                spec.access_point.x,
                spec.access_point.y,
                flag(m.is_ready()),
                time_to_ready(spec, m),
            ]);
        }
        let s = self.config.storage_rect.center();
        out.extend_from_slice(&[s.x, s.y]);
        out.push(f64::from(state.step_index) / f64::from(self.config.max_steps));
    }
}

fn sanitize(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}

pub(crate) fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Remaining processing time as a fraction of the cycle; 0 when ready.
pub(crate) fn time_to_ready(spec: &MachineSpec, m: &MachineState) -> f64 {
    match m.phase {
        MachinePhase::Ready => 0.0,
        MachinePhase::Processing => {
            let cycle = f64::from(spec.cycle_duration);
            ((cycle - f64::from(m.timer)) / cycle).clamp(0.0, 1.0)
        }
    }
}

fn clamp_to_walls(agent: &mut AgentState, bounds: &Rect) {
    if agent.position.x < bounds.min.x || agent.position.x > bounds.max.x {
        agent.position.x = agent.position.x.clamp(bounds.min.x, bounds.max.x);
        agent.velocity.x = 0.0;
    }
    if agent.position.y < bounds.min.y || agent.position.y > bounds.max.y {
        agent.position.y = agent.position.y.clamp(bounds.min.y, bounds.max.y);
        agent.velocity.y = 0.0;
    }
}

/// Moves the agent to the nearest face of `b` that keeps it inside the walls, zeroing the
/// velocity component along the exit axis.
fn project_out(agent: &mut AgentState, b: &Rect, bounds: &Rect) {
    let p = agent.position;
    // (depth, axis is x, target coordinate)
    let mut exits = [
        (p.x - b.min.x, true, b.min.x),
        (b.max.x - p.x, true, b.max.x),
        (p.y - b.min.y, false, b.min.y),
        (b.max.y - p.y, false, b.max.y),
    ];
    exits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let in_bounds = |&(_, is_x, target): &(f64, bool, f64)| {
        if is_x {
            target >= bounds.min.x && target <= bounds.max.x
        } else {
            target >= bounds.min.y && target <= bounds.max.y
        }
    };
    let (_, is_x, target) = exits.iter().copied().find(in_bounds).unwrap_or(exits[0]);
    if is_x {
        agent.position.x = target;
        agent.velocity.x = 0.0;
    } else {
        agent.position.y = target;
        agent.velocity.y = 0.0;
    }
}
