use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, OptimizerKind, PlateauHalving};
use crate::corpus::{ParallelCorpus, TokenId, EOS};
use crate::models::Discriminator;
use crate::negatives::{Corrupter, ErrorType};
use crate::parallel::Execution;

use super::losses::discriminator_loss;
use super::{apply_update, batch_gradients, streams, Batcher, LogRecord, Result, TrainError, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscConfig {
    pub corrupter: Corrupter,
    pub clip_norm: f64,
    pub batch: usize,
    pub eval_every: u64,
    pub max_halvings: u32,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_iters: u64,
    pub seed: u64,
    /// Seed of the fixed development negatives.
    pub dev_seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            corrupter: Corrupter::new(ErrorType::Repeat),
            clip_norm: 1.0,
            batch: 32,
            eval_every: 200,
            max_halvings: 5,
            lr: 1e-3,
            weight_decay: 1e-6,
            max_iters: 20_000,
            seed: 0,
            dev_seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl DiscConfig {
    pub fn new(kind: ErrorType) -> Self {
        DiscConfig {
            corrupter: Corrupter::new(kind),
            ..Self::default()
        }
    }
}

/// One corrupted copy of each development reference, drawn from a fixed
/// seed so accuracies are comparable across runs.
pub fn dev_negatives(dev: &ParallelCorpus, corrupter: &Corrupter, seed: u64) -> Result<Vec<Vec<TokenId>>> {
    let mut rng = streams::rng(seed, streams::DEV_NEGATIVES);
    dev.iter()
        .map(|e| Ok(corrupter.apply(&e.target, EOS, &mut rng)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscAccuracy {
    /// Percentage of the 2N items (references and negatives) classified
    /// correctly: `D(s, r) > 0.5`, `D(s, e) <= 0.5`.
    pub per_item: f64,
    /// Percentage of pairs where both items are classified correctly.
    pub per_pair: f64,
}

pub fn discriminator_accuracy(
    d: &Discriminator,
    dev: &ParallelCorpus,
    negatives: &[Vec<TokenId>],
    exec: Execution,
) -> Result<DiscAccuracy> {
    if dev.is_empty() || dev.len() != negatives.len() {
        return Err(TrainError::Config("one negative per development reference is required".into()));
    }
    let idx: Vec<usize> = (0..dev.len()).collect();
    let outcomes = exec
        .map(&idx, |&i| {
            let e = &dev.examples[i];
            let pos = d.discriminate(&e.source, &e.target)? > 0.5;
            let neg = d.discriminate(&e.source, &negatives[i])? <= 0.5;
            Ok((pos, neg))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = dev.len() as f64;
    let items = outcomes.iter().map(|&(p, q)| p as usize + q as usize).sum::<usize>() as f64;
    let pairs = outcomes.iter().filter(|&&(p, q)| p && q).count() as f64;
    Ok(DiscAccuracy {
        per_item: 100.0 * items / (2.0 * n),
        per_pair: 100.0 * pairs / n,
    })
}

/// Trains `d` on references against corrupted references. A fresh negative
/// is drawn for every reference each time it appears in a mini-batch.
/// Returns with the parameters of the best development accuracy; the
/// caller treats the discriminator as frozen from then on.
pub fn train_discriminator(
    d: &mut Discriminator,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    cfg: &DiscConfig,
) -> Result<TrainReport> {
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if cfg.batch == 0 || cfg.eval_every == 0 || cfg.lr <= 0.0 {
        return Err(TrainError::Config("batch, eval_every and lr must be positive".into()));
    }
    let exec = cfg.execution;
    let dev_neg = dev_negatives(dev, &cfg.corrupter, cfg.dev_seed)?;
    let n_params = d.params.len();
    let mut opt = Optimizer::new(OptimizerKind::adam(cfg.weight_decay), &d.params);
    let mut plateau = PlateauHalving::new(cfg.lr, true);
    plateau.max_halvings = cfg.max_halvings;
    let mut batcher = Batcher::new(train.len(), streams::rng(cfg.seed, streams::BATCHES));
    let mut neg_rng = streams::rng(cfg.seed, streams::NEGATIVES);
    let mut best = d.params.clone();
    let mut report = TrainReport {
        log: Vec::new(),
        best_iter: 0,
        best_metric: f64::NEG_INFINITY,
        iterations: 0,
    };
    for iter in 1..=cfg.max_iters {
        let idx = batcher.next_batch(cfg.batch);
        let mut items = Vec::with_capacity(idx.len());
        for &i in &idx {
            let e = &train.examples[i];
            let neg = cfg.corrupter.apply(&e.target, EOS, &mut neg_rng)?;
            items.push((e, neg));
        }
        let (loss, grads) = {
            let dm = &*d;
            batch_gradients(exec, n_params, &items, |(e, neg)| {
                let g = Graph::new(&dm.params);
                let l = discriminator_loss(&g, dm, &e.source, &e.target, neg)?;
                Ok((g.scalar_value(l), g.backward(l)?.into_params()))
            })?
        };
        let loss = loss / items.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { iter, loss });
        }
        apply_update(&mut d.params, &mut opt, grads, items.len(), Some(cfg.clip_norm), plateau.lr);
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
            let acc = discriminator_accuracy(d, dev, &dev_neg, exec)?.per_item;
            let dec = plateau.observe(acc);
            if dec.improved {
                best = d.params.clone();
                report.best_iter = iter;
                report.best_metric = acc;
            }
            record.dev_metric = Some(acc);
            record.lr = dec.lr;
            record.halvings = plateau.halvings;
            stop = dec.stop;
        }
        report.log.push(record);
        if stop {
            break;
        }
    }
    if report.best_iter == 0 {
        report.best_metric = discriminator_accuracy(d, dev, &dev_neg, exec)?.per_item;
        best = d.params.clone();
        report.best_iter = report.iterations;
    }
    d.params = best;
    Ok(report)
}
