//! Dense tensors, a tape-based reverse-mode AD graph, optimizers,
//! learning-rate schedules and checkpoints.
//!
//! A [`Graph`] borrows a [`ParamStore`] read-only, so several graphs can be
//! built from the same parameters on different threads; each returns its
//! own [`ParamGrads`], which are summed in a fixed order before an optimizer
//! step.

mod checkpoint;
mod graph;
mod optim;
mod params;
mod schedule;
mod tensor;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use graph::{Gradients, Graph, Var};
pub use optim::{clip_gradients, Optimizer, OptimizerKind};
pub use params::{Init, ParamGrads, ParamId, ParamStore, Parameter};
pub use schedule::{PlateauDecision, PlateauHalving, WarmupCosine};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("index {index} out of range for {op} of size {size}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("parameter {0:?} not found")]
    MissingParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AdError>;
