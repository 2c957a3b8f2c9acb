//! Pose-report channel models and their staleness ledgers.
//!
//! `Central` polls `capacity` robots per tick in round-robin order and is the only way poses
//! reach anyone; a robot learns a peer's pose through the station's waypoint downlink, so the
//! peer age it sees is the station's age `waypoint_delay` ticks earlier plus that delay.
//! `Gossip` lets every robot broadcast each tick to peers within `neighbor_radius`, each link
//! succeeding with probability `p`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::BridgeError;
use crate::env::Vec2;
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ChannelKind {
    #[default]
    Central,
    Gossip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ChannelModel {
    pub kind: ChannelKind,
    /// Pose reports the central antenna can take per tick.
    pub capacity: usize,
    /// Per-link delivery probability for gossip.
    pub p: f64,
    pub neighbor_radius: f64,
    /// Ticks between a waypoint leaving the station and reaching its robot.
    pub waypoint_delay: u32,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Central,
            capacity: 1,
            p: 1.0,
            neighbor_radius: 0.6,
            waypoint_delay: 1,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.capacity == 0 {
            return Err(BridgeError::Config {
                field: "capacity",
                reason: "must be at least 1",
            });
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(BridgeError::Config {
                field: "p",
                reason: "must lie in [0, 1]",
            });
        }
        if self.neighbor_radius.is_nan() || self.neighbor_radius < 0.0 {
            return Err(BridgeError::Config {
                field: "neighbor_radius",
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

/// Outcome of one channel tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommTick {
    /// Robots whose current report reached the station.
    pub uplink: Vec<usize>,
    /// `(sender, receiver)` gossip deliveries.
    pub gossip: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    model: ChannelModel,
    n: usize,
    rng: DetRng,
    next_poll: usize,
    station_age: Vec<Option<u32>>,
    /// Station ages of the last `waypoint_delay + 1` ticks, newest last.
    history: VecDeque<Vec<Option<u32>>>,
    /// `[receiver * n + sender]`
    neighbor_age: Vec<Option<u32>>,
}

fn bump(age: &mut Option<u32>) {
    if let Some(a) = age {
        *a += 1;
    }
}

impl Channel {
    pub fn new(model: ChannelModel, n: usize, rng: DetRng) -> Result<Self, BridgeError> {
        model.validate()?;
        Ok(Self {
            model,
            n,
            rng,
            next_poll: 0,
            station_age: vec![None; n],
            history: VecDeque::new(),
            neighbor_age: vec![None; n * n],
        })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn tick(&mut self, positions: &[Vec2]) -> CommTick {
        debug_assert_eq!(positions.len(), self.n);
        let mut out = CommTick::default();
        match self.model.kind {
            ChannelKind::Central => {
                self.station_age.iter_mut().for_each(bump);
                for _ in 0..self.model.capacity.min(self.n) {
                    let i = self.next_poll;
                    self.station_age[i] = Some(0);
                    out.uplink.push(i);
                    self.next_poll = (i + 1) % self.n;
                }
                self.history.push_back(self.station_age.clone());
                while self.history.len() > self.model.waypoint_delay as usize + 1 {
                    self.history.pop_front();
                }
            }
            ChannelKind::Gossip => {
                for sender in 0..self.n {
                    for receiver in 0..self.n {
                        if sender == receiver {
                            continue;
                        }
                        let age = &mut self.neighbor_age[receiver * self.n + sender];
                        let near = positions[sender].distance(positions[receiver]) <= self.model.neighbor_radius;
                        if near && self.rng.bernoulli(self.model.p) {
                            *age = Some(0);
                            out.gossip.push((sender, receiver));
                        } else {
                            bump(age);
                        }
                    }
                }
            }
        }
        out
    }

    /// Ticks since the station last heard from `robot` (central only).
    pub fn station_age(&self, robot: usize) -> Option<u32> {
        self.station_age[robot]
    }

    /// Mean station age over robots it has heard from.
    pub fn mean_station_age(&self) -> Option<f64> {
        mean(self.station_age.iter().filter_map(|a| a.map(f64::from)))
    }

    /// Age of `sender`'s pose as known to `receiver`.
    pub fn peer_age(&self, receiver: usize, sender: usize) -> Option<u32> {
        match self.model.kind {
            ChannelKind::Central => {
                let d = self.model.waypoint_delay;
                if self.history.len() <= d as usize {
                    return None;
                }
                self.history[0][sender].map(|a| a + d)
            }
            ChannelKind::Gossip => self.neighbor_age[receiver * self.n + sender],
        }
    }

    /// Mean peer age over ordered robot pairs currently within `neighbor_radius`.
    pub fn mean_neighbor_age(&self, positions: &[Vec2]) -> Option<f64> {
        let r = self.model.neighbor_radius;
        let mut ages = Vec::new();
        for receiver in 0..self.n {
            for sender in 0..self.n {
                if sender != receiver && positions[sender].distance(positions[receiver]) <= r {
                    if let Some(a) = self.peer_age(receiver, sender) {
                        ages.push(f64::from(a));
                    }
                }
            }
        }
        mean(ages.into_iter())
    }

    /// Staleness attributed to one robot's pose: the station's age under central, the mean
    /// age held by its current neighbors under gossip.
    pub fn robot_pose_age(&self, robot: usize, positions: &[Vec2]) -> Option<f64> {
        match self.model.kind {
            ChannelKind::Central => self.station_age[robot].map(f64::from),
            ChannelKind::Gossip => mean((0..self.n).filter_map(|j| {
                let near = j != robot && positions[j].distance(positions[robot]) <= self.model.neighbor_radius;
                if near {
                    self.neighbor_age[j * self.n + robot].map(f64::from)
                } else {
                    None
                }
            })),
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(n: usize, capacity: usize) -> Channel {
        let model = ChannelModel {
            capacity,
            ..ChannelModel::default()
        };
        Channel::new(model, n, DetRng::new(0, 0)).unwrap()
    }

    #[test]
    fn round_robin_ages_cycle() {
        let mut ch = central(3, 1);
        let pos = [Vec2::ZERO; 3];
        for _ in 0..3 {
            ch.tick(&pos);
        }
        for k in 0..6 {
            let polled = ch.tick(&pos).uplink;
            assert_eq!(polled, [k % 3]);
            let mut ages: Vec<u32> = (0..3).map(|i| ch.station_age(i).unwrap()).collect();
            ages.sort();
            assert_eq!(ages, [0, 1, 2]);
            assert_eq!(ch.mean_station_age(), Some(1.0));
        }
    }

    #[test]
    fn capacity_covers_fleet() {
        let mut ch = central(4, 9);
        let out = ch.tick(&[Vec2::ZERO; 4]);
        assert_eq!(out.uplink, [0, 1, 2, 3]);
        assert_eq!(ch.mean_station_age(), Some(0.0));
    }

    #[test]
    fn gossip_respects_radius_and_loss() {
        let model = ChannelModel {
            kind: ChannelKind::Gossip,
            p: 0.0,
            ..ChannelModel::default()
        };
        let mut ch = Channel::new(model, 2, DetRng::new(0, 0)).unwrap();
        assert!(ch.tick(&[Vec2::ZERO, Vec2::new(0.1, 0.0)]).gossip.is_empty());
        let model = ChannelModel {
            kind: ChannelKind::Gossip,
            ..ChannelModel::default()
        };
        let mut ch = Channel::new(model, 3, DetRng::new(0, 0)).unwrap();
        let pos = [Vec2::ZERO, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)];
        let out = ch.tick(&pos);
        assert_eq!(out.gossip, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(ch.peer_age(2, 0), None);
        assert_eq!(ch.mean_neighbor_age(&pos), Some(0.0));
    }

    #[test]
    fn relay_age_adds_downlink_delay() {
        let mut ch = central(2, 1);
        let pos = [Vec2::ZERO; 2];
        ch.tick(&pos);
        assert_eq!(ch.peer_age(1, 0), None);
        ch.tick(&pos);
        assert_eq!(ch.peer_age(1, 0), Some(1));
        assert_eq!(ch.peer_age(0, 1), None);
        ch.tick(&pos);
        assert_eq!(ch.peer_age(0, 1), Some(1));
        assert_eq!(ch.peer_age(1, 0), Some(2));
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = ChannelModel {
            capacity: 0,
            ..ChannelModel::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(BridgeError::Config { field: "capacity", .. })
        ));
        let bad = ChannelModel {
            p: 1.5,
            ..ChannelModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
