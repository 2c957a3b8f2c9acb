//! Multi-agent machine tending on a desk.
//!
//! This crate holds everything that is pure computation:
//!
//! - [`env`]: a deterministic, vectorizable 2D machine-tending scenario with holonomic agents,
//!   machine part cycles, pickup/delivery, collisions and shaped rewards.
//! - [`nn`]: a small dense reverse-mode autodiff engine with the layers the trainers need
//!   (MLP, multi-head self-attention encoder, diagonal Gaussian head, Adam).
//! - [`marl`]: MAPPO with a shared actor and a centralized critic, in a flat-MLP and an
//!   attention-encoder variant, plus the evaluator.
//! - [`bridge`]: the sim-to-robot bridge: gray-code localization, differential-drive waypoint
//!   following, a 20-byte frame codec and central/gossip channel models.
//!
//! The crate is `no_std` (it needs `alloc`). All transcendental math goes through `libm` and all
//! randomness through seeded ChaCha streams, so trajectories replay bit-identically across
//! platforms. File formats, sockets and the command line live in the `tending-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bridge;
pub mod env;
pub mod marl;
pub mod math;
pub mod nn;
pub mod rng;

pub use env::{Scenario, ScenarioConfig, WorldState};
pub use marl::{PolicyBundle, PpoConfig, Variant};
