//! Minimal dense reverse-mode autodiff.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward value, so node order
//! is already a topological order and [`Graph::backward`] walks it once in reverse. Shapes are
//! explicit; the only broadcasting is along the batch (row) dimension through the dedicated
//! `*_row` operations.

mod adam;
mod attention;
mod gaussian;
pub mod gradcheck;
mod graph;
mod init;
mod mlp;
mod params;
mod tensor;

use alloc::vec::Vec;

pub use adam::{Adam, AdamConfig};
pub use attention::{AttentionEncoder, AttentionEncoderSpec};
pub use gaussian::{gaussian_entropy, gaussian_log_prob, GaussianHead, GaussianSample, LOG_STD_MAX, LOG_STD_MIN};
pub use graph::{Gradients, Graph, Var};
pub use init::orthogonal;
pub use mlp::{linear_stack, Mlp, MlpSpec};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} needs a different number of values than {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already ran on this graph; rebuild it with a fresh forward pass")]
    BackwardTwice,
    #[error("batch row {row} has no valid tokens")]
    AllMasked { row: usize },
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("invalid layer specification: {0}")]
    Spec(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(alloc::string::String),
}
