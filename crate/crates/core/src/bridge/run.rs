//! Lockstep ground-station / channel / robot simulation.
//!
//! Every robot tick runs the station, then the channel, then each robot in id order. The
//! station steps the scenario every `ticks_per_sim_step` ticks and streams each agent's scaled
//! position as that robot's waypoint. Mimicking is open loop: robot poses never feed back into
//! the simulation.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    BridgeError, BridgeFrame, Channel, ChannelModel, DriveParams, Endpoint, GrayCodeSchedule, LocalizationMode,
    Localizer, MsgType, Pose, SeqTracker, Transport, FRAME_LEN,
};
use crate::env::{Observation, Rect, Scenario, Vec2, WorldState};
use crate::marl::JointPolicy;
use crate::math;
use crate::rng::{streams, DetRng};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BridgeConfig {
    /// Arena meters per simulation meter.
    pub scale: f64,
    pub ticks_per_sim_step: u32,
    pub channel: ChannelModel,
    pub schedule: GrayCodeSchedule,
    pub localization: LocalizationMode,
    pub drive: DriveParams,
    /// Robots start this far (meters) from their twin's scaled position, in a seeded direction.
    pub start_offset: f64,
    /// Use the policy mean instead of sampling.
    pub deterministic_policy: bool,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            scale: 1.0 / 3.0,
            ticks_per_sim_step: 5,
            channel: ChannelModel::default(),
            schedule: GrayCodeSchedule::default(),
            localization: LocalizationMode::GrayCode,
            drive: DriveParams::default(),
            start_offset: 0.03,
            deterministic_policy: true,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<(), BridgeError> {
        let bad = |field, reason| Err(BridgeError::Config { field, reason });
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale", "must be positive");
        }
        if self.ticks_per_sim_step == 0 {
            return bad("ticks_per_sim_step", "must be at least 1");
        }
        let d = &self.drive;
        if !(d.dt > 0.0 && d.wheel_base > 0.0 && d.wheel_max > 0.0) {
            return bad("drive", "dt, wheel_base and wheel_max must be positive");
        }
        if self.start_offset.is_nan() || self.start_offset < 0.0 {
            return bad("start_offset", "must be non-negative");
        }
        self.channel.validate()?;
        self.schedule.validate()
    }
}

/// One `(tick, robot)` sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tick: u64,
    pub robot_id: u8,
    /// Distance between the robot and its twin's scaled position.
    pub track_err_m: f64,
    /// Distance between the robot and the waypoint it is following, if it has one.
    pub waypoint_err_m: Option<f64>,
    pub pose_age_ticks: Option<f64>,
    /// Cumulative.
    pub mirrored_deliveries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotMetrics {
    pub mean_track_err_m: f64,
    pub max_track_err_m: f64,
    pub mirrored_deliveries: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMetrics {
    pub robots: Vec<RobotMetrics>,
    /// Time-averaged mean station pose age (central only).
    pub mean_station_age: Option<f64>,
    /// Time-averaged mean age of peer poses over pairs within the neighbor radius.
    pub mean_neighbor_age: Option<f64>,
    pub sim_steps: u64,
    pub sim_deliveries: u64,
    pub fixes: u64,
    pub stale_frames_dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeReport {
    pub trace: Vec<TraceRow>,
    pub metrics: BridgeMetrics,
}

struct Robot {
    pose: Pose,
    localizer: Localizer,
    waypoint: Option<Vec2>,
    tracker: SeqTracker,
    seq: u32,
    report: Option<[u8; FRAME_LEN]>,
    in_storage: bool,
    mirrored: u32,
    err_sum: f64,
    err_max: f64,
}

struct Station {
    seq: Vec<u32>,
    tracker: SeqTracker,
    poses: Vec<Option<Pose>>,
    downlink: VecDeque<(u64, u8, [u8; FRAME_LEN])>,
}

fn transport_err<E: core::fmt::Display>(e: E) -> BridgeError {
    BridgeError::Transport(format!("{e}"))
}

fn agent_id(i: usize) -> Result<u8, BridgeError> {
    u8::try_from(i).map_err(|_| BridgeError::Config {
        field: "n_agents",
        reason: "robot ids are 8-bit",
    })
}

/// Runs the bridge for `ticks` robot ticks.
pub fn run_bridge<T: Transport>(
    scenario: &Scenario,
    policy: &mut dyn JointPolicy,
    config: &BridgeConfig,
    transport: &mut T,
    ticks: u64,
    seed: u64,
) -> Result<BridgeReport, BridgeError> {
    config.validate()?;
    let n = scenario.n_agents();
    if let Some(p) = policy.n_agents() {
        if p != n {
            return Err(BridgeError::AgentCount { policy: p, scenario: n });
        }
    }
    agent_id(n.saturating_sub(1))?;
    let scale = config.scale;
    let c = scenario.config();
    let storage = Rect {
        min: c.storage_rect.min * scale,
        max: c.storage_rect.max * scale,
    };
    let sim_ms = math::round(c.dt * 1000.0) as u32;

    let mut resets = DetRng::new(seed, streams::ENV_RESET);
    let mut sampling = DetRng::new(seed, streams::POLICY_SAMPLING);
    let mut placement = DetRng::new(seed, streams::INIT);
    let (mut state, mut obs): (WorldState, Vec<Observation>) = scenario.reset(resets.next_u64())?;
    let mut channel = Channel::new(config.channel, n, DetRng::new(seed, streams::CHANNEL))?;

    let mut robots: Vec<Robot> = state
        .agents
        .iter()
        .map(|a| {
            let dir = placement.uniform_in(-math::PI, math::PI);
            let heading = placement.uniform_in(-math::PI, math::PI);
            let p = a.position * scale + Vec2::new(math::cos(dir), math::sin(dir)) * config.start_offset;
            let pose = Pose::new(p.x, p.y, heading);
            Robot {
                pose,
                localizer: Localizer::new(config.schedule, config.localization, pose),
                waypoint: None,
                tracker: SeqTracker::new(),
                seq: 0,
                report: None,
                in_storage: storage.contains(p),
                mirrored: 0,
                err_sum: 0.0,
                err_max: 0.0,
            }
        })
        .collect();
    let mut station = Station {
        seq: vec![0; n],
        tracker: SeqTracker::new(),
        poses: vec![None; n],
        downlink: VecDeque::new(),
    };

    let mut trace = Vec::with_capacity(ticks as usize * n);
    let mut metrics = BridgeMetrics {
        robots: Vec::new(),
        mean_station_age: None,
        mean_neighbor_age: None,
        sim_steps: 0,
        sim_deliveries: 0,
        fixes: 0,
        stale_frames_dropped: 0,
    };
    let (mut station_age_sum, mut station_age_n) = (0.0, 0u64);
    let (mut neighbor_age_sum, mut neighbor_age_n) = (0.0, 0u64);
    let mut sim_time_ms: u32 = 0;

    for tick in 0..ticks {
        // station
        while let Some(bytes) = transport.recv(Endpoint::Station).map_err(transport_err)? {
            let f = BridgeFrame::decode(&bytes)?;
            if f.msg_type == MsgType::PoseReport && (f.robot_id as usize) < n && station.tracker.accept(&f) {
                station.poses[f.robot_id as usize] = Some(f.pose());
            } else {
                metrics.stale_frames_dropped += 1;
            }
        }
        if tick % u64::from(config.ticks_per_sim_step) == 0 {
            if tick > 0 {
                let rng = if config.deterministic_policy {
                    None
                } else {
                    Some(&mut sampling)
                };
                let actions = policy.act(scenario, &state, &obs, rng)?;
                let out = scenario.step(&mut state, &actions);
                metrics.sim_steps += 1;
                metrics.sim_deliveries += u64::from(out.info.deliveries_this_step);
                sim_time_ms = sim_time_ms.wrapping_add(sim_ms);
                if out.terminated {
                    let next = state.rng.next_u64();
                    (state, obs) = scenario.reset(next)?;
                } else {
                    obs = out.observations;
                }
            }
            for (i, a) in state.agents.iter().enumerate() {
                station.seq[i] += 1;
                let id = agent_id(i)?;
                let frame = BridgeFrame::waypoint(id, station.seq[i], sim_time_ms, a.position * scale);
                station
                    .downlink
                    .push_back((tick + u64::from(config.channel.waypoint_delay), id, frame.encode()));
            }
        }

        // channel
        while station.downlink.front().is_some_and(|(due, _, _)| *due <= tick) {
            let (_, id, bytes) = station.downlink.pop_front().expect("checked non-empty");
            transport.send(Endpoint::Robot(id), &bytes).map_err(transport_err)?;
        }
        let positions: Vec<Vec2> = robots.iter().map(|r| r.pose.position()).collect();
        let comm = channel.tick(&positions);
        for i in comm.uplink {
            if let Some(bytes) = robots[i].report {
                transport.send(Endpoint::Station, &bytes).map_err(transport_err)?;
            }
        }
        for (from, to) in comm.gossip {
            if let Some(bytes) = robots[from].report {
                transport
                    .send(Endpoint::Robot(agent_id(to)?), &bytes)
                    .map_err(transport_err)?;
            }
        }
        if let Some(a) = channel.mean_station_age() {
            station_age_sum += a;
            station_age_n += 1;
        }
        if let Some(a) = channel.mean_neighbor_age(&positions) {
            neighbor_age_sum += a;
            neighbor_age_n += 1;
        }

        // robots
        let p = &config.drive;
        for (i, robot) in robots.iter_mut().enumerate() {
            let id = agent_id(i)?;
            while let Some(bytes) = transport.recv(Endpoint::Robot(id)).map_err(transport_err)? {
                let f = BridgeFrame::decode(&bytes)?;
                let mine = f.msg_type == MsgType::Waypoint && f.robot_id == id;
                let peer = f.msg_type == MsgType::PoseReport && f.robot_id != id;
                if (mine || peer) && robot.tracker.accept(&f) {
                    if mine {
                        robot.waypoint = Some(f.position());
                    }
                } else {
                    metrics.stale_frames_dropped += 1;
                }
            }
            let (v, w) = match robot.waypoint {
                Some(wp) => {
                    let (v, w) = p.control(&robot.localizer.estimate(), wp);
                    p.body_rates(p.wheel_speeds(v, w))
                }
                None => (0.0, 0.0),
            };
            robot.pose = robot.pose.integrate(v, w, p.dt);
            if robot.localizer.tick(&robot.pose, v, w, p.dt)?.is_some() {
                metrics.fixes += 1;
            }
            robot.seq += 1;
            robot.report =
                Some(BridgeFrame::pose_report(id, robot.seq, sim_time_ms, &robot.localizer.estimate()).encode());

            let here = robot.pose.position();
            let twin = &state.agents[i];
            let err = here.distance(twin.position * scale);
            robot.err_sum += err;
            robot.err_max = robot.err_max.max(err);
            let inside = storage.contains(here);
            if inside && !robot.in_storage && twin.carrying {
                robot.mirrored += 1;
            }
            robot.in_storage = inside;
            trace.push(TraceRow {
                tick,
                robot_id: id,
                track_err_m: err,
                waypoint_err_m: robot.waypoint.map(|wp| here.distance(wp)),
                pose_age_ticks: None,
                mirrored_deliveries: robot.mirrored,
            });
        }
        let after: Vec<Vec2> = robots.iter().map(|r| r.pose.position()).collect();
        let base = trace.len() - n;
        for (i, row) in trace[base..].iter_mut().enumerate() {
            row.pose_age_ticks = channel.robot_pose_age(i, &after);
        }
    }

    let ticks_f = ticks.max(1) as f64;
    metrics.robots = robots
        .iter()
        .map(|r| RobotMetrics {
            mean_track_err_m: r.err_sum / ticks_f,
            max_track_err_m: r.err_max,
            mirrored_deliveries: r.mirrored,
        })
        .collect();
    metrics.mean_station_age = (station_age_n > 0).then(|| station_age_sum / station_age_n as f64);
    metrics.mean_neighbor_age = (neighbor_age_n > 0).then(|| neighbor_age_sum / neighbor_age_n as f64);
    Ok(BridgeReport { trace, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{ChannelKind, InProcessTransport};
    use crate::env::ScenarioConfig;
    use crate::marl::{BundlePolicy, NetConfig, PolicyBundle, Variant, ZeroPolicy};

    fn lossless(kind: ChannelKind) -> BridgeConfig {
        BridgeConfig {
            channel: ChannelModel {
                kind,
                waypoint_delay: 0,
                ..ChannelModel::default()
            },
            localization: LocalizationMode::Oracle,
            ..BridgeConfig::default()
        }
    }

    #[test]
    fn static_targets_are_reached() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let cfg = lossless(ChannelKind::Central);
        let r = run_bridge(&sc, &mut ZeroPolicy, &cfg, &mut InProcessTransport::new(), 400, 3).unwrap();
        let last = &r.trace[r.trace.len() - 3..];
        assert!(last.iter().all(|row| row.waypoint_err_m.unwrap() < 0.01), "{last:?}");
        assert!(last.iter().all(|row| row.track_err_m < 0.011));
        assert_eq!(r.metrics.sim_deliveries, 0);
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let cfg = BridgeConfig::default();
        let p = PolicyBundle::new(&sc, Variant::FlatMlp, NetConfig::default(), 1).unwrap();
        let a = run_bridge(&sc, &mut BundlePolicy(&p), &cfg, &mut InProcessTransport::new(), 120, 5).unwrap();
        let b = run_bridge(&sc, &mut BundlePolicy(&p), &cfg, &mut InProcessTransport::new(), 120, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.metrics.fixes > 0);
    }

    #[test]
    fn agent_count_mismatch_is_rejected() {
        let small = Scenario::new(ScenarioConfig::reduced()).unwrap();
        let big = Scenario::new(ScenarioConfig::default()).unwrap();
        let p = PolicyBundle::new(&small, Variant::FlatMlp, NetConfig::default(), 1).unwrap();
        let err = run_bridge(
            &big,
            &mut BundlePolicy(&p),
            &BridgeConfig::default(),
            &mut InProcessTransport::new(),
            1,
            0,
        );
        assert_eq!(err, Err(BridgeError::AgentCount { policy: 1, scenario: 3 }));
    }
}
