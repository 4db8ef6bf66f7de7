use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, OptimizerKind};
use crate::corpus::{ParallelCorpus, TokenId, EOS};
use crate::decoding::DecodeConfig;
use crate::metrics::gleu;
use crate::models::{BaselineRegressor, Discriminator, Seq2Seq};
use crate::parallel::Execution;

use super::losses::{mixed_loss_var, mle_loss, reward_target, rl_loss, RewardSpec};
use super::{
    apply_update, batch_gradients, evaluate_generator, streams, Batcher, LogRecord, Result, SelectMetric, TrainError,
    TrainReport,
};

/// Candidate values for the MLE weight of the mixed loss.
pub const LAMBDA_MIXED_GRID: [f64; 11] = [0.5, 0.3, 0.1, 7.5e-2, 5e-2, 2.5e-2, 1e-2, 7.5e-3, 5e-3, 2.5e-3, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub lambda_mixed: f64,
    pub reward: RewardSpec,
    pub iterations: u64,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub label_smoothing: f64,
    pub clip_norm: f64,
    pub eval_every: u64,
    pub baseline_lr: f64,
    pub select: SelectMetric,
    /// Sampling limit; `None` allows `2 * |source| + 5` tokens.
    pub max_len: Option<usize>,
    /// Decoding used for development scoring.
    pub dev_decode: DecodeConfig,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lambda_mixed: 0.1,
            reward: RewardSpec::discriminator_only(),
            iterations: 2000,
            batch: 16,
            lr: 5e-2,
            momentum: 0.9,
            label_smoothing: 0.1,
            clip_norm: 1.0,
            eval_every: 100,
            baseline_lr: 0.1,
            select: SelectMetric::Erep,
            max_len: None,
            dev_decode: DecodeConfig::greedy(),
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mixed > 0.0 && self.lambda_mixed <= 1.0) {
            return Err(TrainError::Config(format!("lambda_mixed {} outside (0, 1]", self.lambda_mixed)));
        }
        if !(0.0..=1.0).contains(&self.reward.lambda_rl) {
            return Err(TrainError::Config(format!("lambda_rl {} outside [0, 1]", self.reward.lambda_rl)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(TrainError::Config("label_smoothing outside [0, 1)".into()));
        }
        if self.batch == 0 || self.eval_every == 0 || self.lr <= 0.0 {
            return Err(TrainError::Config("batch, eval_every and lr must be positive".into()));
        }
        if matches!(self.select, SelectMetric::Acc) {
            return Err(TrainError::Config("acc cannot select a generator".into()));
        }
        Ok(())
    }

    fn limit(&self, src_len: usize) -> usize {
        self.max_len.unwrap_or(2 * src_len + 5)
    }
}

struct ExampleOutcome {
    loss: f64,
    grads: crate::autodiff::ParamGrads,
    reward: f64,
    states: Vec<Vec<f64>>,
}

fn sentence_reward(
    spec: &RewardSpec,
    d: Option<&Discriminator>,
    src: &[TokenId],
    sampled: &[TokenId],
    reference: &[TokenId],
) -> Result<f64> {
    let body = sampled.strip_suffix(&[EOS]).unwrap_or(sampled);
    let g = if spec.lambda_rl < 1.0 { gleu(reference, body, 4) } else { 0.0 };
    let dv = match d {
        Some(d) if spec.needs_discriminator() => d.discriminate(src, &reward_target(sampled))?,
        None if spec.needs_discriminator() => {
            return Err(TrainError::Config("reward needs a discriminator".into()));
        }
        _ => 0.0,
    };
    let r = spec.combine(dv, g);
    if !(0.0..=1.0).contains(&r) || r.is_nan() {
        return Err(TrainError::RewardOutOfRange(r));
    }
    Ok(r)
}

/// Fine-tunes `model` with the mixed MLE/REINFORCE loss. Each iteration
/// samples one output per batch example, scores it with the sentence
/// reward (broadcast to every step), subtracts the linear baseline and
/// takes an SGD-momentum step. The baseline is then fitted to the observed
/// rewards. `model` ends holding the snapshot with the best development
/// score under `cfg.select`, which may be the initial parameters.
pub fn train_rl(
    model: &mut Seq2Seq,
    disc: Option<&Discriminator>,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    cfg: &RlConfig,
) -> Result<(TrainReport, BaselineRegressor)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if cfg.reward.needs_discriminator() && disc.is_none() {
        return Err(TrainError::Config("reward needs a discriminator".into()));
    }
    let exec = cfg.execution;
    let lambda = cfg.lambda_mixed;
    let n_params = model.params.len();
    let mut opt = Optimizer::new(OptimizerKind::sgd_momentum(cfg.momentum), &model.params);
    let mut baseline = BaselineRegressor::zeros(model.config.dim);
    let mut batcher = Batcher::new(train.len(), streams::rng(cfg.seed, streams::BATCHES));

    let mut best_score = evaluate_generator(model, dev, cfg.select, &cfg.dev_decode, exec)?;
    let mut best = model.params.clone();
    let mut report = TrainReport {
        log: vec![LogRecord {
            iter: 0,
            loss: 0.0,
            dev_metric: Some(best_score),
            lr: cfg.lr,
            halvings: 0,
            reward: None,
            baseline_mse: None,
        }],
        best_iter: 0,
        best_metric: best_score,
        iterations: 0,
    };

    for iter in 1..=cfg.iterations {
        let idx = batcher.next_batch(cfg.batch);
        let items: Vec<(usize, usize)> = idx.iter().copied().enumerate().collect();
        let outcomes = {
            let m = &*model;
            let b = &baseline;
            exec.map(&items, |&(k, i)| -> Result<ExampleOutcome> {
                let e = &train.examples[i];
                let mut rng = streams::rng(cfg.seed.wrapping_add(streams::SAMPLING << 56), iter * 65_536 + k as u64);
                let g = Graph::new(&m.params);
                let traj = m.sample_in(&g, &e.source, cfg.limit(e.source.len()), &mut rng)?;
                let reward = sentence_reward(&cfg.reward, disc, &e.source, &traj.tokens, &e.target)?;
                let states: Vec<Vec<f64>> = traj.states.iter().map(|&s| g.value(s).into_data()).collect();
                let baselines: Vec<f64> = states.iter().map(|s| b.predict(s)).collect();
                let rewards = vec![reward; traj.tokens.len()];
                let rl = rl_loss(&g, &traj.log_probs, &rewards, &baselines)?;
                let mle = mle_loss(&g, m, &e.source, &e.target, cfg.label_smoothing)?;
                let total = mixed_loss_var(&g, mle, rl, lambda)?;
                Ok(ExampleOutcome {
                    loss: g.scalar_value(total),
                    grads: g.backward(total)?.into_params(),
                    reward,
                    states,
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?
        };
        let n = outcomes.len();
        let loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { iter, loss });
        }
        let mean_reward = outcomes.iter().map(|o| o.reward).sum::<f64>() / n as f64;
        let mut states: Vec<&[f64]> = Vec::new();
        let mut targets = Vec::new();
        for o in &outcomes {
            for s in &o.states {
                states.push(s);
                targets.push(o.reward);
            }
        }
        let mse = baseline.sgd_step(&states, &targets, cfg.baseline_lr);
        let (_, grads) = batch_gradients(Execution::Sequential, n_params, &outcomes, |o| Ok((0.0, o.grads.clone())))?;
        apply_update(&mut model.params, &mut opt, grads, n, Some(cfg.clip_norm), cfg.lr);
        report.iterations = iter;
        let mut record = LogRecord {
            iter,
            loss,
            dev_metric: None,
            lr: cfg.lr,
            halvings: 0,
            reward: Some(mean_reward),
            baseline_mse: Some(mse),
        };
        if iter % cfg.eval_every == 0 || iter == cfg.iterations {
            let score = evaluate_generator(model, dev, cfg.select, &cfg.dev_decode, exec)?;
            record.dev_metric = Some(score);
            if cfg.select.better(score, best_score) {
                best_score = score;
                best = model.params.clone();
                report.best_iter = iter;
                report.best_metric = score;
            }
        }
        report.log.push(record);
    }
    model.params = best;
    Ok((report, baseline))
}
