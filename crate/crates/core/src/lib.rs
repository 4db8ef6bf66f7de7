//! Training conditional text generators to suppress a targeted error type.
//!
//! The pipeline has four stages:
//!
//! 1. An attention encoder-decoder is pre-trained with label-smoothed
//!    maximum likelihood ([`training::train_mle`]).
//! 2. A discriminator is trained to separate references from artificially
//!    corrupted references ([`negatives`], [`training::train_discriminator`]).
//! 3. The generator is fine-tuned with REINFORCE, using the frozen
//!    discriminator (optionally mixed with GLEU) as the sentence reward
//!    ([`training::train_rl`]).
//! 4. Outputs are decoded ([`decoding`]) and scored with repetition, coverage
//!    and n-gram metrics ([`metrics`]).
//!
//! Everything runs on a small reverse-mode AD core ([`autodiff`]); no
//! external numerical library is involved.

pub mod autodiff;
pub mod corpus;
pub mod decoding;
pub mod metrics;
pub mod models;
pub mod negatives;
pub mod parallel;
pub mod training;

pub use corpus::{ParallelCorpus, ParallelExample, Sentence, TokenId, Vocabulary, BOS, EOS, UNK};
