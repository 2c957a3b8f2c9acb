//! Fixed 20-byte little-endian bridge frame.
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 1    | `msg_type`   |
//! | 1      | 1    | `robot_id`   |
//! | 2      | 4    | `seq` u32    |
//! | 6      | 4    | `t_sim_ms` u32 |
//! | 10     | 4    | `x_mm` i32   |
//! | 14     | 4    | `y_mm` i32   |
//! | 18     | 2    | `theta_mrad` i16 |

use alloc::collections::BTreeMap;

use super::Pose;
use crate::env::Vec2;
use crate::math;

pub const FRAME_LEN: usize = 20;

/// Largest heading magnitude a frame may carry, `round(π · 1000)`.
pub const THETA_LIMIT_MRAD: i16 = 3142;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("frame length: expected {FRAME_LEN} bytes, got {found}")]
    Length { found: usize },
    #[error("msg_type: unknown value {value}")]
    MsgType { value: u8 },
    #[error("theta_mrad: {value} is invalid for a {msg_type:?} frame")]
    Theta { value: i16, msg_type: MsgType },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    Waypoint = 0,
    PoseReport = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BridgeFrame {
    pub msg_type: MsgType,
    pub robot_id: u8,
    pub seq: u32,
    pub t_sim_ms: u32,
    pub x_mm: i32,
    pub y_mm: i32,
    /// Zero in waypoints.
    pub theta_mrad: i16,
}

fn to_mm(m: f64) -> i32 {
    math::round(m * 1000.0).clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
}

impl BridgeFrame {
    pub fn waypoint(robot_id: u8, seq: u32, t_sim_ms: u32, target: Vec2) -> Self {
        Self {
            msg_type: MsgType::Waypoint,
            robot_id,
            seq,
            t_sim_ms,
            x_mm: to_mm(target.x),
            y_mm: to_mm(target.y),
            theta_mrad: 0,
        }
    }

    pub fn pose_report(robot_id: u8, seq: u32, t_sim_ms: u32, pose: &Pose) -> Self {
        let theta = math::round(pose.theta * 1000.0).clamp(-f64::from(THETA_LIMIT_MRAD), f64::from(THETA_LIMIT_MRAD));
        Self {
            msg_type: MsgType::PoseReport,
            robot_id,
            seq,
            t_sim_ms,
            x_mm: to_mm(pose.x),
            y_mm: to_mm(pose.y),
            theta_mrad: theta as i16,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(f64::from(self.x_mm) / 1000.0, f64::from(self.y_mm) / 1000.0)
    }

    pub fn pose(&self) -> Pose {
        let p = self.position();
        Pose::new(p.x, p.y, f64::from(self.theta_mrad) / 1000.0)
    }

    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut b = [0u8; FRAME_LEN];
        b[0] = self.msg_type as u8;
        b[1] = self.robot_id;
        b[2..6].copy_from_slice(&self.seq.to_le_bytes());
        b[6..10].copy_from_slice(&self.t_sim_ms.to_le_bytes());
        b[10..14].copy_from_slice(&self.x_mm.to_le_bytes());
        b[14..18].copy_from_slice(&self.y_mm.to_le_bytes());
        b[18..20].copy_from_slice(&self.theta_mrad.to_le_bytes());
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let b: &[u8; FRAME_LEN] = bytes
            .try_into()
            .map_err(|_| FrameError::Length { found: bytes.len() })?;
        let msg_type = match b[0] {
            0 => MsgType::Waypoint,
            1 => MsgType::PoseReport,
            value => return Err(FrameError::MsgType { value }),
        };
        let word = |i: usize| [b[i], b[i + 1], b[i + 2], b[i + 3]];
        let theta_mrad = i16::from_le_bytes([b[18], b[19]]);
        let theta_ok = match msg_type {
            MsgType::Waypoint => theta_mrad == 0,
            MsgType::PoseReport => theta_mrad.abs() <= THETA_LIMIT_MRAD,
        };
        if !theta_ok {
            return Err(FrameError::Theta {
                value: theta_mrad,
                msg_type,
            });
        }
        Ok(Self {
            msg_type,
            robot_id: b[1],
            seq: u32::from_le_bytes(word(2)),
            t_sim_ms: u32::from_le_bytes(word(6)),
            x_mm: i32::from_le_bytes(word(10)),
            y_mm: i32::from_le_bytes(word(14)),
            theta_mrad,
        })
    }
}

/// Receiver-side filter keeping only frames newer than the last accepted one of their
/// `(robot_id, msg_type)` stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeqTracker {
    last: BTreeMap<(u8, MsgType), u32>,
}

impl SeqTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns whether the frame is fresh, recording it if so.
    pub fn accept(&mut self, frame: &BridgeFrame) -> bool {
        let key = (frame.robot_id, frame.msg_type);
        match self.last.get(&key) {
            Some(&s) if frame.seq <= s => false,
            _ => {
                self.last.insert(key, frame.seq);
                true
            }
        }
    }

    pub fn last(&self, robot_id: u8, msg_type: MsgType) -> Option<u32> {
        self.last.get(&(robot_id, msg_type)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian() {
        let f = BridgeFrame {
            msg_type: MsgType::PoseReport,
            robot_id: 7,
            seq: 0x0403_0201,
            t_sim_ms: 100,
            x_mm: -2,
            y_mm: 513,
            theta_mrad: -1,
        };
        let b = f.encode();
        assert_eq!(b[..6], [1, 7, 1, 2, 3, 4]);
        assert_eq!(b[6..10], [100, 0, 0, 0]);
        assert_eq!(b[10..14], [0xfe, 0xff, 0xff, 0xff]);
        assert_eq!(b[14..18], [1, 2, 0, 0]);
        assert_eq!(b[18..], [0xff, 0xff]);
        assert_eq!(BridgeFrame::decode(&b).unwrap(), f);
    }

    #[test]
    fn malformed_frames_name_the_field() {
        let f = BridgeFrame::waypoint(1, 1, 0, Vec2::new(0.1, 0.2)).encode();
        assert_eq!(BridgeFrame::decode(&f[..19]), Err(FrameError::Length { found: 19 }));
        let mut bad = f;
        bad[0] = 9;
        assert_eq!(BridgeFrame::decode(&bad), Err(FrameError::MsgType { value: 9 }));
        let mut bad = f;
        bad[18] = 1;
        assert!(matches!(
            BridgeFrame::decode(&bad),
            Err(FrameError::Theta { value: 1, .. })
        ));
    }

    #[test]
    fn stale_sequence_numbers_are_dropped() {
        let mut t = SeqTracker::new();
        let f = |seq| BridgeFrame::waypoint(2, seq, 0, Vec2::ZERO);
        assert!(t.accept(&f(5)));
        assert!(!t.accept(&f(5)));
        assert!(!t.accept(&f(3)));
        assert!(t.accept(&BridgeFrame::pose_report(2, 1, 0, &Pose::default())));
        assert!(t.accept(&f(6)));
        assert_eq!(t.last(2, MsgType::Waypoint), Some(6));
    }
}
