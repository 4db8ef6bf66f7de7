use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, OptimizerKind, PlateauHalving};
use crate::corpus::{ParallelCorpus, EOS};
use crate::models::Seq2Seq;
use crate::parallel::Execution;

use super::losses::mle_loss;
use super::{apply_update, batch_gradients, streams, Batcher, LogRecord, Result, TrainError, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub label_smoothing: f64,
    pub clip_norm: f64,
    pub batch: usize,
    pub eval_every: u64,
    pub max_halvings: u32,
    pub lr: f64,
    pub weight_decay: f64,
    /// Hard cap on iterations in case the plateau rule never fires.
    pub max_iters: u64,
    /// Stop at the first evaluation whose dev perplexity is at or below this.
    pub stop_below: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            label_smoothing: 0.1,
            clip_norm: 1.0,
            batch: 32,
            eval_every: 200,
            max_halvings: 5,
            lr: 1e-3,
            weight_decay: 1e-6,
            max_iters: 20_000,
            stop_below: None,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(TrainError::Config(format!("label_smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        if self.batch == 0 || self.eval_every == 0 || self.lr <= 0.0 || self.clip_norm <= 0.0 {
            return Err(TrainError::Config("batch, eval_every, lr and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// `exp` of the mean per-token negative log-likelihood of `target </s>`.
pub fn dev_perplexity(model: &Seq2Seq, dev: &ParallelCorpus, exec: Execution) -> Result<f64> {
    if dev.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let parts = exec
        .map(&dev.examples, |e| {
            model
                .log_likelihood(&e.source, &e.target)
                .map(|ll| (-ll, e.target.len() + 1))
        })
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let nll: f64 = parts.iter().map(|p| p.0).sum();
    let tokens: usize = parts.iter().map(|p| p.1).sum();
    Ok((nll / tokens as f64).exp())
}

/// Trains with label-smoothed MLE until the learning rate has been halved
/// `max_halvings` times (or `max_iters` is reached). The model is left
/// holding the parameters with the best development perplexity.
pub fn train_mle(model: &mut Seq2Seq, train: &ParallelCorpus, dev: &ParallelCorpus, cfg: &MleConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    debug_assert!(train.iter().all(|e| !e.target.contains(&EOS)));
    let exec = cfg.execution;
    let n_params = model.params.len();
    let mut opt = Optimizer::new(OptimizerKind::adam(cfg.weight_decay), &model.params);
    let mut plateau = PlateauHalving::new(cfg.lr, false);
    plateau.max_halvings = cfg.max_halvings;
    let mut batcher = Batcher::new(train.len(), streams::rng(cfg.seed, streams::BATCHES));
    let mut best = model.params.clone();
    let mut report = TrainReport {
        log: Vec::new(),
        best_iter: 0,
        best_metric: f64::INFINITY,
        iterations: 0,
    };
    for iter in 1..=cfg.max_iters {
        let idx = batcher.next_batch(cfg.batch);
        let items: Vec<_> = idx.iter().map(|&i| &train.examples[i]).collect();
        let (loss, grads) = {
            let m = &*model;
            batch_gradients(exec, n_params, &items, |e| {
                let g = Graph::new(&m.params);
                let l = mle_loss(&g, m, &e.source, &e.target, cfg.label_smoothing)?;
                let v = g.scalar_value(l);
                Ok((v, g.backward(l)?.into_params()))
            })?
        };
        let loss = loss / items.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { iter, loss });
        }
        apply_update(&mut model.params, &mut opt, grads, items.len(), Some(cfg.clip_norm), plateau.lr);
        report.iterations = iter;
        let mut record = LogRecord {
            iter,
            loss,
            dev_metric: None,
            lr: plateau.lr,
            halvings: plateau.halvings,
            reward: None,
            baseline_mse: None,
        };
        let mut stop = false;
        if iter % cfg.eval_every == 0 {
            let ppl = dev_perplexity(model, dev, exec)?;
            if !ppl.is_finite() {
                return Err(TrainError::Divergence { iter, loss: ppl });
            }
            let d = plateau.observe(ppl);
            if d.improved {
                best = model.params.clone();
                report.best_iter = iter;
                report.best_metric = ppl;
            }
            record.dev_metric = Some(ppl);
            record.lr = d.lr;
            record.halvings = plateau.halvings;
            stop = d.stop || cfg.stop_below.is_some_and(|t| ppl <= t);
        }
        report.log.push(record);
        if stop {
            break;
        }
    }
    if report.best_iter == 0 {
        report.best_metric = dev_perplexity(model, dev, exec)?;
        best = model.params.clone();
        report.best_iter = report.iterations;
    }
    model.params = best;
    Ok(report)
}
