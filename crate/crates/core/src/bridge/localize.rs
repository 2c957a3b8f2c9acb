//! Projected gray-code localization.
//!
//! Each tick the robot reads one bit-plane under its current cell: the `bits` x planes
//! most-significant first, then the y planes. After `2·bits` frames the collected codewords are
//! decoded and the estimate snaps to the decoded cell center. Between fixes the estimate is
//! dead-reckoned from the commanded body rates.

use super::{gray_decode, gray_encode, BridgeError, Pose};
use crate::env::{Rect, Vec2};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GrayCodeSchedule {
    pub bits: u32,
    /// Ticks each projected frame stays up.
    pub frame_ticks: u32,
    pub arena: Rect,
}

impl Default for GrayCodeSchedule {
    fn default() -> Self {
        Self {
            bits: 10,
            frame_ticks: 1,
            arena: Rect::new(-0.5, -0.5, 0.5, 0.5),
        }
    }
}

impl GrayCodeSchedule {
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.bits == 0 || self.bits > 16 {
            return Err(BridgeError::Config {
                field: "bits",
                reason: "must lie in 1..=16",
            });
        }
        if self.frame_ticks == 0 {
            return Err(BridgeError::Config {
                field: "frame_ticks",
                reason: "must be at least 1",
            });
        }
        if !self.arena.is_well_formed() || self.arena.width() <= 0.0 || self.arena.height() <= 0.0 {
            return Err(BridgeError::Config {
                field: "arena",
                reason: "must have positive extent",
            });
        }
        Ok(())
    }

    pub fn frames_per_fix(&self) -> u32 {
        2 * self.bits
    }

    pub fn cells(&self) -> u32 {
        1 << self.bits
    }

    pub fn cell_size(&self) -> Vec2 {
        let k = f64::from(self.cells());
        Vec2::new(self.arena.width() / k, self.arena.height() / k)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().norm()
    }

    /// Cell index of `p` per axis, clamped to the arena.
    pub fn cell_of(&self, p: Vec2) -> (u32, u32) {
        let s = self.cell_size();
        let top = f64::from(self.cells() - 1);
        let ix = math::floor((p.x - self.arena.min.x) / s.x).clamp(0.0, top);
        let iy = math::floor((p.y - self.arena.min.y) / s.y).clamp(0.0, top);
        (ix as u32, iy as u32)
    }

    pub fn cell_center(&self, ix: u32, iy: u32) -> Vec2 {
        let s = self.cell_size();
        Vec2::new(
            self.arena.min.x + (f64::from(ix) + 0.5) * s.x,
            self.arena.min.y + (f64::from(iy) + 0.5) * s.y,
        )
    }

    /// Axis (0 = x, 1 = y) and bit position shown in frame `k` of a fix.
    pub fn plane(&self, k: u32) -> (usize, u32) {
        let k = k % self.frames_per_fix();
        if k < self.bits {
            (0, self.bits - 1 - k)
        } else {
            (1, self.bits - 1 - (k - self.bits))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LocalizationMode {
    #[default]
    GrayCode,
    /// The estimate is the true pose every tick.
    Oracle,
}

/// A completed gray-code fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub cell: (u32, u32),
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localizer {
    schedule: GrayCodeSchedule,
    mode: LocalizationMode,
    frame: u32,
    tick_in_frame: u32,
    codes: [u32; 2],
    estimate: Pose,
    age: u32,
}

impl Localizer {
    /// Starts from a known pose (robots are placed by hand before a run).
    pub fn new(schedule: GrayCodeSchedule, mode: LocalizationMode, start: Pose) -> Self {
        Self {
            schedule,
            mode,
            frame: 0,
            tick_in_frame: 0,
            codes: [0; 2],
            estimate: start,
            age: 0,
        }
    }

    pub fn estimate(&self) -> Pose {
        self.estimate
    }

    /// Ticks since the last fix.
    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn schedule(&self) -> &GrayCodeSchedule {
        &self.schedule
    }

    /// Advances one tick: dead-reckons with the commanded rates, then reads this tick's bit.
    pub fn tick(&mut self, truth: &Pose, v: f64, omega: f64, dt: f64) -> Result<Option<Fix>, BridgeError> {
        if self.mode == LocalizationMode::Oracle {
            self.estimate = *truth;
            self.age = 0;
            return Ok(None);
        }
        self.estimate = self.estimate.integrate(v, omega, dt);
        self.age += 1;

        let s = &self.schedule;
        let (axis, bit) = s.plane(self.frame);
        let (cx, cy) = s.cell_of(truth.position());
        let code = gray_encode(if axis == 0 { cx } else { cy }, s.bits)?;
        let mask = 1 << bit;
        self.codes[axis] = (self.codes[axis] & !mask) | (code & mask);

        self.tick_in_frame += 1;
        if self.tick_in_frame < s.frame_ticks {
            return Ok(None);
        }
        self.tick_in_frame = 0;
        self.frame += 1;
        if self.frame < s.frames_per_fix() {
            return Ok(None);
        }
        self.frame = 0;
        let cell = (gray_decode(self.codes[0], s.bits)?, gray_decode(self.codes[1], s.bits)?);
        let position = s.cell_center(cell.0, cell.1);
        self.estimate.x = position.x;
        self.estimate.y = position.y;
        self.age = 0;
        Ok(Some(Fix { cell, position }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_order_is_msb_first_x_then_y() {
        let s = GrayCodeSchedule {
            bits: 3,
            ..GrayCodeSchedule::default()
        };
        let planes: alloc::vec::Vec<_> = (0..7).map(|k| s.plane(k)).collect();
        assert_eq!(planes, [(0, 2), (0, 1), (0, 0), (1, 2), (1, 1), (1, 0), (0, 2)]);
    }

    #[test]
    fn stationary_fix_after_exactly_two_b_ticks() {
        let s = GrayCodeSchedule::default();
        let truth = Pose::new(0.1234, -0.3017, 0.0);
        let mut loc = Localizer::new(s, LocalizationMode::GrayCode, Pose::default());
        for _ in 0..19 {
            assert_eq!(loc.tick(&truth, 0.0, 0.0, 0.02).unwrap(), None);
        }
        let fix = loc.tick(&truth, 0.0, 0.0, 0.02).unwrap().unwrap();
        assert_eq!(fix.cell, s.cell_of(truth.position()));
        assert!(loc.estimate().position().distance(truth.position()) <= s.cell_diagonal() / 2.0);
        assert_eq!(loc.age(), 0);
    }

    #[test]
    fn one_bit_snaps_to_cell_centers() {
        let s = GrayCodeSchedule {
            bits: 1,
            ..GrayCodeSchedule::default()
        };
        let mut loc = Localizer::new(s, LocalizationMode::GrayCode, Pose::default());
        let truth = Pose::new(-0.4, 0.1, 0.0);
        loc.tick(&truth, 0.0, 0.0, 0.02).unwrap();
        loc.tick(&truth, 0.0, 0.0, 0.02).unwrap().unwrap();
        assert_eq!(loc.estimate().position(), Vec2::new(-0.25, 0.25));
    }

    #[test]
    fn dead_reckoning_between_fixes() {
        let mut loc = Localizer::new(GrayCodeSchedule::default(), LocalizationMode::GrayCode, Pose::default());
        loc.tick(&Pose::default(), 0.1, 0.0, 0.5).unwrap();
        assert_eq!(loc.estimate().x, 0.05);
        assert_eq!(loc.age(), 1);
    }
}
