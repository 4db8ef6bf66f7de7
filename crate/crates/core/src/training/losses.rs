use crate::autodiff::{Graph, Var};
use crate::corpus::{TokenId, EOS};
use crate::metrics::gleu;
use crate::models::{Discriminator, Seq2Seq};

use super::{Result, TrainError};

/// Label-smoothed negative log-likelihood of `tgt </s>` under teacher
/// forcing: `-sum_j [(1 - eps) log p(r_j) + eps/V sum_v log p(v)]`.
pub fn mle_loss(g: &Graph, model: &Seq2Seq, src: &[TokenId], tgt: &[TokenId], eps: f64) -> Result<Var> {
    assert!((0.0..1.0).contains(&eps), "label smoothing must lie in [0, 1)");
    let lps = model.teacher_forced(g, src, tgt)?;
    let v = model.config.tgt_vocab as f64;
    let mut terms = Vec::with_capacity(lps.len());
    for (&lp, &y) in lps.iter().zip(tgt.iter().chain(std::iter::once(&EOS))) {
        let gold = g.scale(g.pick(lp, y as usize)?, -(1.0 - eps));
        if eps > 0.0 {
            terms.push(g.add(gold, g.scale(g.sum(lp), -eps / v))?);
        } else {
            terms.push(gold);
        }
    }
    Ok(g.add_n(&terms)?)
}

/// `-log D(s, r) - log(1 - D(s, e))`.
pub fn discriminator_loss(
    g: &Graph,
    d: &Discriminator,
    src: &[TokenId],
    reference: &[TokenId],
    negative: &[TokenId],
) -> Result<Var> {
    let pos = d.logit(g, src, reference)?;
    let neg = d.logit(g, src, negative)?;
    pair_loss(g, pos, neg)
}

/// The discriminator loss in terms of the two pre-sigmoid scores.
pub fn pair_loss(g: &Graph, pos_logit: Var, neg_logit: Var) -> Result<Var> {
    let pos = g.log_sigmoid(pos_logit);
    let neg = g.log_sigmoid(g.scale(neg_logit, -1.0));
    Ok(g.scale(g.add(pos, neg)?, -1.0))
}

/// REINFORCE surrogate `-sum_j log p(t_j) (R_j - b_j)`. Rewards and
/// baselines are constants.
pub fn rl_loss(g: &Graph, log_probs: &[Var], rewards: &[f64], baselines: &[f64]) -> Result<Var> {
    if log_probs.is_empty() || log_probs.len() != rewards.len() || rewards.len() != baselines.len() {
        return Err(TrainError::LengthMismatch {
            log_probs: log_probs.len(),
            rewards: rewards.len(),
            baselines: baselines.len(),
        });
    }
    let terms: Vec<Var> = log_probs
        .iter()
        .zip(rewards.iter().zip(baselines))
        .map(|(&lp, (r, b))| g.scale(lp, -(r - b)))
        .collect();
    Ok(g.add_n(&terms)?)
}

/// Value of [`rl_loss`] without a graph.
pub fn rl_loss_value(log_probs: &[f64], rewards: &[f64], baselines: &[f64]) -> Result<f64> {
    if log_probs.is_empty() || log_probs.len() != rewards.len() || rewards.len() != baselines.len() {
        return Err(TrainError::LengthMismatch {
            log_probs: log_probs.len(),
            rewards: rewards.len(),
            baselines: baselines.len(),
        });
    }
    Ok(-log_probs
        .iter()
        .zip(rewards.iter().zip(baselines))
        .map(|(lp, (r, b))| lp * (r - b))
        .sum::<f64>())
}

/// `lambda * mle + (1 - lambda) * rl`.
pub fn mixed_loss(mle: f64, rl: f64, lambda: f64) -> f64 {
    lambda * mle + (1.0 - lambda) * rl
}

pub fn mixed_loss_var(g: &Graph, mle: Var, rl: Var, lambda: f64) -> Result<Var> {
    Ok(g.add(g.scale(mle, lambda), g.scale(rl, 1.0 - lambda))?)
}

/// Sentence reward `lambda_rl * D(s, t) + (1 - lambda_rl) * GLEU(t, r) / 100`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RewardSpec {
    pub lambda_rl: f64,
}

impl RewardSpec {
    pub fn discriminator_only() -> Self {
        RewardSpec { lambda_rl: 1.0 }
    }

    pub fn gleu_only() -> Self {
        RewardSpec { lambda_rl: 0.0 }
    }

    pub fn needs_discriminator(&self) -> bool {
        self.lambda_rl > 0.0
    }

    pub fn combine(&self, d: f64, gleu: f64) -> f64 {
        self.lambda_rl * d + (1.0 - self.lambda_rl) * gleu / 100.0
    }
}

/// Target presented to the discriminator: the output without its final
/// `</s>`, or `[</s>]` when nothing else was produced.
pub fn reward_target(t: &[TokenId]) -> Vec<TokenId> {
    let body = t.strip_suffix(&[EOS]).unwrap_or(t);
    if body.is_empty() {
        vec![EOS]
    } else {
        body.to_vec()
    }
}

/// Reward of output `t` (trailing `</s>` allowed) for source `s` and
/// reference `r`. Fails if the result leaves `[0, 1]`.
pub fn joint_reward(
    spec: &RewardSpec,
    d: Option<&Discriminator>,
    s: &[TokenId],
    t: &[TokenId],
    r: &[TokenId],
) -> Result<f64> {
    if !(0.0..=1.0).contains(&spec.lambda_rl) {
        return Err(TrainError::Config(format!("lambda_rl {} outside [0, 1]", spec.lambda_rl)));
    }
    let body = t.strip_suffix(&[EOS]).unwrap_or(t);
    let g = if spec.lambda_rl < 1.0 { gleu(r, body, 4) } else { 0.0 };
    let dv = if spec.needs_discriminator() {
        let d = d.ok_or_else(|| TrainError::Config("reward needs a discriminator".into()))?;
        d.discriminate(s, &reward_target(t))?
    } else {
        0.0
    };
    let reward = spec.combine(dv, g);
    if !(0.0..=1.0).contains(&reward) || reward.is_nan() {
        return Err(TrainError::RewardOutOfRange(reward));
    }
    Ok(reward)
}
