//! Greedy and beam-search decoding.
//!
//! Search runs against the [`StepModel`] trait so it can be exercised on
//! tiny hand-built models as well as on a [`Seq2Seq`] generator.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::corpus::{TokenId, BOS, EOS};
use crate::models::{DecoderState, Encoded, ModelError, Seq2Seq};
use crate::parallel::Execution;

/// An autoregressive next-token distribution.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn start(&self) -> Result<Self::State, ModelError>;

    /// Log-probabilities of the next token after `prev`, and the new state.
    fn step(&self, state: &Self::State, prev: TokenId) -> Result<(Vec<f64>, Self::State), ModelError>;
}

/// A [`Seq2Seq`] model conditioned on one source sentence.
pub struct Seq2SeqStepper<'m> {
    model: &'m Seq2Seq,
    graph: Graph<'m>,
    enc: Encoded,
}

impl<'m> Seq2SeqStepper<'m> {
    pub fn new(model: &'m Seq2Seq, src: &[TokenId]) -> Result<Self, ModelError> {
        let graph = Graph::new(&model.params);
        let enc = model.encode(&graph, src)?;
        Ok(Seq2SeqStepper { model, graph, enc })
    }
}

impl StepModel for Seq2SeqStepper<'_> {
    type State = DecoderState;

    fn vocab_size(&self) -> usize {
        self.model.config.tgt_vocab
    }

    fn start(&self) -> Result<DecoderState, ModelError> {
        Ok(self.model.initial_state(&self.graph, &self.enc))
    }

    fn step(&self, state: &DecoderState, prev: TokenId) -> Result<(Vec<f64>, DecoderState), ModelError> {
        let out = self.model.step(&self.graph, &self.enc, state, prev)?;
        Ok((self.graph.value(out.log_probs).into_data(), out.state))
    }
}

/// A model whose next-token distribution depends only on the position and
/// the previous token.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    vocab: usize,
    /// `[position][prev]` log-probabilities.
    table: Vec<Vec<Vec<f64>>>,
}

fn log_normalize(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - z).collect()
}

impl TableModel {
    /// Builds the table from `logits(position, prev)`.
    pub fn from_fn(vocab: usize, positions: usize, logits: impl Fn(usize, TokenId) -> Vec<f64>) -> Self {
        let table = (0..positions)
            .map(|p| (0..vocab).map(|prev| log_normalize(&logits(p, prev as TokenId))).collect())
            .collect();
        TableModel { vocab, table }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(vocab: usize, positions: usize, scale: f64, rng: &mut R) -> Self {
        let mut raw = Vec::with_capacity(positions * vocab);
        for _ in 0..positions * vocab {
            raw.push((0..vocab).map(|_| rng.gen_range(-scale..=scale)).collect::<Vec<f64>>());
        }
        TableModel::from_fn(vocab, positions, |p, prev| raw[p * vocab + prev as usize].clone())
    }

    pub fn log_prob(&self, position: usize, prev: TokenId, next: TokenId) -> f64 {
        self.table[position.min(self.table.len() - 1)][prev as usize][next as usize]
    }
}

impl StepModel for TableModel {
    type State = usize;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn start(&self) -> Result<usize, ModelError> {
        Ok(0)
    }

    fn step(&self, &pos: &usize, prev: TokenId) -> Result<(Vec<f64>, usize), ModelError> {
        if prev as usize >= self.vocab {
            return Err(ModelError::BadToken {
                token: prev as usize,
                vocab: self.vocab,
            });
        }
        let row = &self.table[pos.min(self.table.len() - 1)][prev as usize];
        Ok((row.clone(), pos + 1))
    }
}

/// A decoded output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Output tokens without the final `</s>`.
    pub tokens: Vec<TokenId>,
    /// Sum of token log-probabilities, including `</s>` when finished.
    pub log_prob: f64,
    /// Whether the model emitted `</s>` within the length limit.
    pub finished: bool,
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Picks the most probable token at every step; ties go to the lowest id.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis, ModelError> {
    assert!(max_len >= 1, "max_len must be positive");
    let mut state = model.start()?;
    let mut prev = BOS;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let (lp, next) = model.step(&state, prev)?;
        let t = argmax_lowest(&lp);
        hyp.log_prob += lp[t];
        if t as TokenId == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(t as TokenId);
        state = next;
        prev = t as TokenId;
    }
    Ok(hyp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub width: usize,
    /// Finished hypotheses are ranked by `log_prob / len^alpha`; 0 disables
    /// normalization.
    pub length_penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 10,
            length_penalty: 0.0,
        }
    }
}

struct Live<S> {
    tokens: Vec<TokenId>,
    score: f64,
    state: S,
}

fn rank(score_a: f64, toks_a: &[TokenId], score_b: f64, toks_b: &[TokenId]) -> Ordering {
    score_b.total_cmp(&score_a).then_with(|| toks_a.cmp(toks_b))
}

/// Beam search. At every step the `width` best continuations of all live
/// hypotheses are kept; those ending in `</s>` retire. Ties are broken by
/// lexicographic token order. If nothing finishes within `max_len` steps
/// the best live hypothesis is returned unfinished.
pub fn beam_decode<M: StepModel>(model: &M, max_len: usize, cfg: BeamConfig) -> Result<Hypothesis, ModelError> {
    assert!(cfg.width >= 1, "beam width must be positive");
    assert!(max_len >= 1, "max_len must be positive");
    let normalized = |score: f64, len: usize| {
        if cfg.length_penalty == 0.0 {
            score
        } else {
            score / (len as f64).powf(cfg.length_penalty)
        }
    };
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        state: model.start()?,
    }];
    let mut finished: Vec<(Vec<TokenId>, f64, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut cands: Vec<(usize, TokenId, f64)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (i, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let (lp, st) = model.step(&h.state, prev)?;
            next_states.push(st);
            cands.extend(lp.iter().enumerate().map(|(v, &l)| (i, v as TokenId, h.score + l)));
        }
        let key = |&(i, v, _): &(usize, TokenId, f64)| {
            let mut t = live[i].tokens.clone();
            t.push(v);
            t
        };
        cands.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                let (ta, tb) = (&live[a.0].tokens, &live[b.0].tokens);
                ta.cmp(tb).then(a.1.cmp(&b.1))
            })
        });
        cands.truncate(cfg.width);
        let mut new_live = Vec::new();
        for c in &cands {
            let (i, v, score) = *c;
            if v == EOS {
                let toks = live[i].tokens.clone();
                let len = toks.len() + 1;
                finished.push((toks, score, normalized(score, len)));
            } else {
                new_live.push(Live {
                    tokens: key(c),
                    score,
                    state: next_states[i].clone(),
                });
            }
        }
        live = new_live;
        if live.is_empty() {
            break;
        }
        if cfg.length_penalty == 0.0 {
            let best_done = finished.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= live[0].score {
                break;
            }
        }
    }
    if let Some(best) = finished
        .iter()
        .min_by(|a, b| rank(a.2, &a.0, b.2, &b.0))
    {
        return Ok(Hypothesis {
            tokens: best.0.clone(),
            log_prob: best.1,
            finished: true,
        });
    }
    let best = live
        .iter()
        .min_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens))
        .expect("beam never empties without finishing");
    Ok(Hypothesis {
        tokens: best.tokens.clone(),
        log_prob: best.score,
        finished: false,
    })
}

/// Decoding settings for whole corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// 1 selects greedy decoding.
    pub beam: usize,
    /// Fixed limit; `None` allows `2 * |source| + 5` tokens.
    pub max_len: Option<usize>,
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 10,
            max_len: None,
            length_penalty: 0.0,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        DecodeConfig {
            beam: 1,
            ..Self::default()
        }
    }

    pub fn limit(&self, src_len: usize) -> usize {
        self.max_len.unwrap_or(2 * src_len + 5)
    }
}

pub fn decode_sentence(model: &Seq2Seq, src: &[TokenId], cfg: &DecodeConfig) -> Result<Hypothesis, ModelError> {
    let stepper = Seq2SeqStepper::new(model, src)?;
    let max_len = cfg.limit(src.len());
    if cfg.beam <= 1 && cfg.length_penalty == 0.0 {
        greedy_decode(&stepper, max_len)
    } else {
        beam_decode(
            &stepper,
            max_len,
            BeamConfig {
                width: cfg.beam.max(1),
                length_penalty: cfg.length_penalty,
            },
        )
    }
}

/// Decodes every source sentence, in order.
pub fn decode_corpus<S: AsRef<[TokenId]> + Sync>(
    model: &Seq2Seq,
    sources: &[S],
    cfg: &DecodeConfig,
    exec: Execution,
) -> Result<Vec<Hypothesis>, ModelError> {
    exec.map(sources, |s| decode_sentence(model, s.as_ref(), cfg))
        .into_iter()
        .collect()
}
