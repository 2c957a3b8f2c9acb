use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::geometry::{Rect, Vec2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
    #[error("machine {machine}: {reason}")]
    Machine { machine: usize, reason: &'static str },
    #[error("could not place {n_agents} non-overlapping agents in the spawn rectangle after {attempts} attempts")]
    SpawnExhausted { n_agents: usize, attempts: usize },
}

/// One production machine, its pickup point and the obstacles around it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MachineSpec {
    pub position: Vec2,
    /// Point an agent has to reach (within `pickup_radius`) to collect a ready part.
    pub access_point: Vec2,
    #[cfg_attr(feature = "serde", serde(default))]
    pub blockers: Vec<Rect>,
    #[cfg_attr(feature = "serde", serde(default = "default_cycle_duration"))]
    pub cycle_duration: u32,
    #[cfg_attr(feature = "serde", serde(default = "default_pickup_radius"))]
    pub pickup_radius: f64,
}

#[cfg(feature = "serde")]
fn default_cycle_duration() -> u32 {
    50
}

#[cfg(feature = "serde")]
fn default_pickup_radius() -> f64 {
    0.15
}

impl MachineSpec {
    pub fn new(position: Vec2, access_point: Vec2, blockers: Vec<Rect>) -> Self {
        Self {
            position,
            access_point,
            blockers,
            cycle_duration: 50,
            pickup_radius: 0.15,
        }
    }
}

/// Static description of a machine-tending scenario.
///
/// The default is the 3 m × 3 m arena with three agents, two machines on each side wall (each
/// flanked by a pair of blockers) and a 0.6 m × 0.3 m storage area at the bottom middle.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub arena_half_extent: f64,
    pub dt: f64,
    pub max_steps: u32,
    pub agent_radius: f64,
    pub machines: Vec<MachineSpec>,
    pub storage_rect: Rect,
    /// Agents spawn uniformly inside this rectangle.
    pub spawn_rect: Rect,
    pub r_deliver: f64,
    pub r_pickup: f64,
    pub w_shaping: f64,
    pub w_collision: f64,
    pub w_time: f64,
    pub a_max: f64,
    pub v_max: f64,
    /// Fraction of velocity lost per step.
    pub drag: f64,
}

fn side_machine(side: f64, y: f64) -> MachineSpec {
    let wall = 1.5 * side;
    let inner = 1.2 * side;
    let (lo_x, hi_x) = if side < 0.0 { (wall, inner) } else { (inner, wall) };
    MachineSpec::new(
        Vec2::new(1.4 * side, y),
        Vec2::new(1.1 * side, y),
        vec![
            Rect::new(lo_x, y + 0.2, hi_x, y + 0.3),
            Rect::new(lo_x, y - 0.3, hi_x, y - 0.2),
        ],
    )
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 3,
            arena_half_extent: 1.5,
            dt: 0.1,
            max_steps: 500,
            agent_radius: 0.05,
            machines: vec![
                side_machine(-1.0, 0.7),
                side_machine(-1.0, -0.3),
                side_machine(1.0, 0.7),
                side_machine(1.0, -0.3),
            ],
            storage_rect: Rect::new(-0.3, -1.5, 0.3, -1.2),
            spawn_rect: Rect::new(-0.5, -0.4, 0.5, 0.6),
            r_deliver: 5.0,
            r_pickup: 1.0,
            w_shaping: 0.05,
            w_collision: 0.5,
            w_time: 0.005,
            a_max: 1.0,
            v_max: 0.5,
            drag: 0.05,
        }
    }
}

impl ScenarioConfig {
    /// Single agent, single machine on the left wall, no blockers.
    pub fn reduced() -> Self {
        Self {
            n_agents: 1,
            machines: vec![MachineSpec::new(Vec2::new(-1.4, 0.7), Vec2::new(-1.1, 0.7), Vec::new())],
            ..Self::default()
        }
    }

    pub fn arena(&self) -> Rect {
        let h = self.arena_half_extent;
        Rect::new(-h, -h, h, h)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason| Err(ConfigError::Invalid { field, reason });
        if self.n_agents < 1 {
            return invalid("n_agents", "must be at least 1");
        }
        if !(self.arena_half_extent > 0.0 && self.arena_half_extent.is_finite()) {
            return invalid("arena_half_extent", "must be positive and finite");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt", "must be positive and finite");
        }
        if self.max_steps < 1 {
            return invalid("max_steps", "must be at least 1");
        }
        if !(self.agent_radius > 0.0 && self.agent_radius < self.arena_half_extent) {
            return invalid("agent_radius", "must be positive and smaller than the arena");
        }
        if !(self.a_max >= 0.0 && self.a_max.is_finite()) {
            return invalid("a_max", "must be non-negative and finite");
        }
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return invalid("v_max", "must be non-negative and finite");
        }
        if !(0.0..1.0).contains(&self.drag) {
            return invalid("drag", "must lie in [0, 1)");
        }
        for (field, w) in [
            ("r_deliver", self.r_deliver),
            ("r_pickup", self.r_pickup),
            ("w_shaping", self.w_shaping),
            ("w_collision", self.w_collision),
            ("w_time", self.w_time),
        ] {
            if !w.is_finite() {
                return invalid(field, "must be finite");
            }
        }
        let arena = self.arena();
        if !self.storage_rect.is_well_formed() || !arena.contains_rect(&self.storage_rect) {
            return invalid("storage_rect", "must be a well-formed rectangle inside the arena");
        }
        if !self.spawn_rect.is_well_formed() || !arena.contains_rect(&self.spawn_rect) {
            return invalid("spawn_rect", "must be a well-formed rectangle inside the arena");
        }
        for (m, spec) in self.machines.iter().enumerate() {
            let err = |reason| Err(ConfigError::Machine { machine: m, reason });
            if spec.cycle_duration < 1 {
                return err("cycle_duration must be at least 1");
            }
            if !(spec.pickup_radius > 0.0 && spec.pickup_radius.is_finite()) {
                return err("pickup_radius must be positive");
            }
            if !spec.position.is_finite() || !arena.contains(spec.access_point) {
                return err("access_point must lie inside the arena");
            }
            for blocker in &spec.blockers {
                if !blocker.is_well_formed() {
                    return err("blocker rectangle is malformed");
                }
                if blocker.overlaps(&self.storage_rect) {
                    return err("blocker overlaps the storage rectangle");
                }
                if self.machines.iter().any(|other| blocker.contains(other.access_point)) {
                    return err("blocker covers a machine access point");
                }
            }
        }
        Ok(())
    }

    pub fn blockers(&self) -> impl Iterator<Item = &Rect> {
        self.machines.iter().flat_map(|m| m.blockers.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_valid() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(c.machines.len(), 4);
        assert_eq!(c.blockers().count(), 8);
        assert!((c.storage_rect.width() - 0.6).abs() < 1e-12);
        assert!((c.storage_rect.height() - 0.3).abs() < 1e-12);
        ScenarioConfig::reduced().validate().unwrap();
    }

    #[test]
    fn rejects_bad_fields() {
        let c = ScenarioConfig {
            n_agents: 0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(ConfigError::Invalid { field: "n_agents", .. })
        ));

        let c = ScenarioConfig {
            dt: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid { field: "dt", .. })));

        let c = ScenarioConfig {
            max_steps: 0,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_err());

        let c = ScenarioConfig {
            storage_rect: Rect::new(1.0, 1.0, 2.0, 2.0),
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(ConfigError::Invalid {
                field: "storage_rect",
                ..
            })
        ));
    }

    #[test]
    fn rejects_blocker_over_access_point_or_storage() {
        let mut c = ScenarioConfig::default();
        c.machines[0].blockers.push(Rect::new(-1.2, 0.6, -1.0, 0.8));
        assert!(matches!(c.validate(), Err(ConfigError::Machine { machine: 0, .. })));

        let mut c = ScenarioConfig::default();
        c.machines[1].blockers.push(Rect::new(-0.1, -1.4, 0.1, -1.3));
        assert!(matches!(c.validate(), Err(ConfigError::Machine { machine: 1, .. })));
    }
}
