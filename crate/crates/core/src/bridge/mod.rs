//! Hardware-in-the-loop bridge between the simulated fleet and virtual differential-drive
//! robots.
//!
//! The station streams agent positions as waypoints; robots localize with projected gray codes
//! and report poses back through either a central polled antenna or neighbor gossip.

mod channel;
mod drive;
mod frame;
mod gray;
mod localize;
mod run;
mod transport;

use alloc::string::String;

pub use channel::{Channel, ChannelKind, ChannelModel, CommTick};
pub use drive::{DriveParams, Pose};
pub use frame::{BridgeFrame, FrameError, MsgType, SeqTracker, FRAME_LEN, THETA_LIMIT_MRAD};
pub use gray::{gray_decode, gray_encode, MAX_BITS};
pub use localize::{Fix, GrayCodeSchedule, LocalizationMode, Localizer};
pub use run::{run_bridge, BridgeConfig, BridgeMetrics, BridgeReport, RobotMetrics, TraceRow};
pub use transport::{Endpoint, InProcessTransport, Transport};

use crate::env::ConfigError;
use crate::marl::TrainError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BridgeError {
    #[error("{field} = {value} is out of range (max {limit})")]
    OutOfRange {
        field: &'static str,
        value: u64,
        limit: u64,
    },
    #[error("invalid bridge setting `{field}`: {reason}")]
    Config { field: &'static str, reason: &'static str },
    #[error("checkpoint drives {policy} agents but the scenario has {scenario}")]
    AgentCount { policy: usize, scenario: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Scenario(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] TrainError),
    #[error("transport: {0}")]
    Transport(String),
}
