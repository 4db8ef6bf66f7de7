//! The generator, the discriminator and the REINFORCE baseline.
//!
//! Models own their [`ParamStore`](crate::autodiff::ParamStore) and build
//! computations into a caller-supplied [`Graph`](crate::autodiff::Graph),
//! so the same code serves training, sampling and decoding.

mod baseline;
mod discriminator;
mod lstm;
mod seq2seq;

use thiserror::Error;

use crate::autodiff::AdError;

pub use baseline::BaselineRegressor;
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use lstm::LstmCell;
pub use seq2seq::{sample_index, DecoderState, Encoded, Sample, Seq2Seq, Seq2SeqConfig, StepOutput, Trajectory};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty source sentence")]
    EmptySource,
    #[error("empty target sentence")]
    EmptyTarget,
    #[error("token id {token} outside vocabulary of size {vocab}")]
    BadToken { token: usize, vocab: usize },
    #[error("model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
