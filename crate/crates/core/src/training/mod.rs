//! The three training loops and the losses and rewards they optimize.
//!
//! * [`train_mle`]: label-smoothed maximum likelihood with Adam and
//!   plateau halving on development perplexity.
//! * [`train_discriminator`]: references against freshly corrupted
//!   references, regenerated for every mini-batch.
//! * [`train_rl`]: REINFORCE with a linear baseline, mixed with the MLE
//!   loss, against a frozen discriminator and/or GLEU.
//!
//! Per-example gradients are computed independently (in parallel when
//! enabled) and summed in example order, so results do not depend on the
//! number of threads.

mod disc;
mod losses;
mod mle;
mod rl;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{clip_gradients, AdError, Optimizer, ParamGrads, ParamStore};
use crate::corpus::ParallelCorpus;
use crate::decoding::{decode_corpus, DecodeConfig};
use crate::metrics::{score_corpus, CorpusScores, MetricError};
use crate::models::{ModelError, Seq2Seq};
use crate::negatives::NegativeError;
use crate::parallel::Execution;

pub use disc::{dev_negatives, discriminator_accuracy, train_discriminator, DiscAccuracy, DiscConfig};
pub use losses::{
    discriminator_loss, joint_reward, mixed_loss, mixed_loss_var, mle_loss, pair_loss, reward_target, rl_loss,
    rl_loss_value, RewardSpec,
};
pub use mle::{dev_perplexity, train_mle, MleConfig};
pub use rl::{train_rl, RlConfig, LAMBDA_MIXED_GRID};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Negative(#[from] NegativeError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("loss diverged at iteration {iter} (value {loss})")]
    Divergence { iter: u64, loss: f64 },
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("length mismatch: {log_probs} log-probs, {rewards} rewards, {baselines} baselines")]
    LengthMismatch {
        log_probs: usize,
        rewards: usize,
        baselines: usize,
    },
    #[error("development corpus lacks the alignments DROP needs")]
    MissingAlignments,
}

impl From<AdError> for TrainError {
    fn from(e: AdError) -> Self {
        TrainError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One line of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    /// Mean per-sentence training loss of the iteration.
    pub loss: f64,
    /// Development score, on evaluation iterations.
    pub dev_metric: Option<f64>,
    pub lr: f64,
    pub halvings: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_mse: Option<f64>,
}

/// What a training run returns besides the updated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<LogRecord>,
    /// Iteration of the returned snapshot (0 = initial parameters).
    pub best_iter: u64,
    pub best_metric: f64,
    pub iterations: u64,
}

impl TrainReport {
    pub fn to_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record serializes") + "\n")
            .collect()
    }
}

/// Development score used to pick the returned snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMetric {
    Erep,
    Drop,
    Bleu,
    Ppl,
    Acc,
}

impl SelectMetric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, SelectMetric::Bleu | SelectMetric::Acc)
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectMetric::Erep => "erep",
            SelectMetric::Drop => "drop",
            SelectMetric::Bleu => "bleu",
            SelectMetric::Ppl => "ppl",
            SelectMetric::Acc => "acc",
        }
    }

    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl FromStr for SelectMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "erep" => Ok(SelectMetric::Erep),
            "drop" => Ok(SelectMetric::Drop),
            "bleu" => Ok(SelectMetric::Bleu),
            "ppl" => Ok(SelectMetric::Ppl),
            "acc" => Ok(SelectMetric::Acc),
            other => Err(format!("unknown selection metric {other:?}")),
        }
    }
}

impl std::fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Decodes the development sources and scores them against the targets.
pub fn decode_and_score(
    model: &Seq2Seq,
    dev: &ParallelCorpus,
    decode: &DecodeConfig,
    exec: Execution,
) -> Result<CorpusScores> {
    let sources = dev.sources();
    let hyps: Vec<Vec<u32>> = decode_corpus(model, &sources, decode, exec)?
        .into_iter()
        .map(|h| h.tokens)
        .collect();
    let refs: Vec<Vec<u32>> = dev.targets().into_iter().map(|s| s.0).collect();
    let aligns: Option<Vec<Vec<(usize, usize)>>> = if dev.has_alignments() {
        Some(dev.iter().map(|e| e.alignment.clone().unwrap()).collect())
    } else {
        None
    };
    Ok(score_corpus(&refs, &hyps, aligns.as_deref())?)
}

/// Development score of a generator under `metric`.
pub fn evaluate_generator(
    model: &Seq2Seq,
    dev: &ParallelCorpus,
    metric: SelectMetric,
    decode: &DecodeConfig,
    exec: Execution,
) -> Result<f64> {
    match metric {
        SelectMetric::Ppl => dev_perplexity(model, dev, exec),
        SelectMetric::Acc => Err(TrainError::Config("accuracy applies to discriminators only".into())),
        SelectMetric::Drop if !dev.has_alignments() => Err(TrainError::MissingAlignments),
        _ => {
            let s = decode_and_score(model, dev, decode, exec)?;
            Ok(match metric {
                SelectMetric::Erep => s.erep,
                SelectMetric::Drop => s.drop.unwrap_or(0.0),
                _ => s.bleu,
            })
        }
    }
}

/// Maps `f` over the items, then sums losses and gradients in item order.
pub(crate) fn batch_gradients<T, F>(exec: Execution, n_params: usize, items: &[T], f: F) -> Result<(f64, ParamGrads)>
where
    T: Sync,
    F: Fn(&T) -> Result<(f64, ParamGrads)> + Sync + Send,
{
    let parts = exec.map(items, f).into_iter().collect::<Result<Vec<_>>>()?;
    let loss = parts.iter().map(|p| p.0).sum();
    Ok((loss, ParamGrads::sum(n_params, parts.iter().map(|p| &p.1))))
}

/// Averages `grads` over `n` examples, clips and takes one optimizer step.
pub(crate) fn apply_update(
    store: &mut ParamStore,
    opt: &mut Optimizer,
    mut grads: ParamGrads,
    n: usize,
    clip: Option<f64>,
    lr: f64,
) {
    grads.scale(1.0 / n as f64);
    store.zero_grad();
    store.accumulate(&grads);
    if let Some(c) = clip {
        clip_gradients(store, c);
    }
    opt.step(store, lr);
}

/// Per-purpose RNG streams derived from one seed.
pub(crate) mod streams {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const BATCHES: u64 = 1;
    pub const NEGATIVES: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const DEV_NEGATIVES: u64 = 4;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }
}

/// Endless shuffled passes over `0..n`.
pub(crate) struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Batcher {
    pub fn new(n: usize, rng: rand_chacha::ChaCha8Rng) -> Self {
        Batcher {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batcher_covers_every_item_each_epoch() {
        let mut b = Batcher::new(10, streams::rng(0, streams::BATCHES));
        let mut seen: Vec<usize> = (0..5).flat_map(|_| b.next_batch(4)).take(20).collect();
        seen[..10].sort();
        assert_eq!(&seen[..10], &(0..10).collect::<Vec<_>>()[..]);
        assert_eq!(Batcher::new(3, streams::rng(0, 1)).next_batch(8).len(), 3);
    }

    #[test]
    fn select_metric_parsing() {
        assert_eq!("drop".parse::<SelectMetric>().unwrap(), SelectMetric::Drop);
        assert!("f1".parse::<SelectMetric>().is_err());
        assert!(SelectMetric::Bleu.better(2.0, 1.0));
        assert!(SelectMetric::Erep.better(1.0, 2.0));
    }
}
