use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Graph, Init, ParamId, ParamStore, Tensor, Var};
use crate::corpus::{TokenId, BOS, EOS};

use super::lstm::{lookup, LstmCell};
use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Embedding and hidden size.
    pub dim: usize,
    pub layers: usize,
}

impl Seq2SeqConfig {
    pub fn new(src_vocab: usize, tgt_vocab: usize, dim: usize) -> Self {
        Seq2SeqConfig {
            src_vocab,
            tgt_vocab,
            dim,
            layers: 1,
        }
    }
}

/// Bidirectional LSTM encoder, LSTM decoder with additive attention and
/// input feeding.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    pub config: Seq2SeqConfig,
    pub params: ParamStore,
    src_emb: ParamId,
    tgt_emb: ParamId,
    enc_fwd: Vec<LstmCell>,
    enc_bwd: Vec<LstmCell>,
    bridge_w: ParamId,
    bridge_b: ParamId,
    dec: Vec<LstmCell>,
    att_k: ParamId,
    att_q: ParamId,
    att_v: ParamId,
    out_wc: ParamId,
    out_bc: ParamId,
    out_wo: ParamId,
    out_bo: ParamId,
}

/// Encoder output inside one graph.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `[n, 2d]`, forward and backward states concatenated.
    pub states: Var,
    keys: Var,
    /// `h^s`, the projected summary vector.
    pub summary: Var,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    /// Attentional output of the previous step, fed to the next input.
    pub feed: Var,
}

impl DecoderState {
    /// Top-layer hidden state.
    pub fn top(&self) -> Var {
        *self.h.last().unwrap()
    }
}

pub struct StepOutput {
    /// Log-probabilities over the target vocabulary.
    pub log_probs: Var,
    /// Attention weights over source positions.
    pub attention: Var,
    pub state: DecoderState,
}

/// A sampled output sequence together with graph handles for training.
pub struct Trajectory {
    /// Sampled ids, ending in `</s>` unless the length limit was hit.
    pub tokens: Vec<TokenId>,
    /// Scalar log-probability of each sampled token.
    pub log_probs: Vec<Var>,
    /// Top decoder state each token was sampled from.
    pub states: Vec<Var>,
}

/// [`Trajectory`] with plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<TokenId>,
    pub log_probs: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Draws an index from log-probabilities.
pub fn sample_index<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let w: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    WeightedIndex::new(&w).expect("valid distribution").sample(rng)
}

impl Seq2Seq {
    pub fn new<R: Rng + ?Sized>(config: Seq2SeqConfig, init: Init, rng: &mut R) -> Self {
        let Seq2SeqConfig {
            src_vocab,
            tgt_vocab,
            dim: d,
            layers,
        } = config;
        assert!(layers >= 1 && d >= 1);
        let mut p = ParamStore::new();
        let src_emb = p.add("src_emb", &[src_vocab, d], init, rng);
        let tgt_emb = p.add("tgt_emb", &[tgt_vocab, d], init, rng);
        let mut enc_fwd = Vec::new();
        let mut enc_bwd = Vec::new();
        for l in 0..layers {
            let input = if l == 0 { d } else { 2 * d };
            enc_fwd.push(LstmCell::new(&mut p, &format!("enc_fwd.{l}"), input, d, init, rng));
            enc_bwd.push(LstmCell::new(&mut p, &format!("enc_bwd.{l}"), input, d, init, rng));
        }
        let bridge_w = p.add("bridge.w", &[d, 2 * d], init, rng);
        let bridge_b = p.add("bridge.b", &[d], init, rng);
        let dec = (0..layers)
            .map(|l| {
                let input = if l == 0 { 2 * d } else { d };
                LstmCell::new(&mut p, &format!("dec.{l}"), input, d, init, rng)
            })
            .collect();
        let att_k = p.add("att.wk", &[2 * d, d], init, rng);
        let att_q = p.add("att.wq", &[d, d], init, rng);
        let att_v = p.add("att.v", &[d], init, rng);
        let out_wc = p.add("out.wc", &[d, 3 * d], init, rng);
        let out_bc = p.add("out.bc", &[d], init, rng);
        let out_wo = p.add("out.wo", &[tgt_vocab, d], init, rng);
        let out_bo = p.add("out.bo", &[tgt_vocab], init, rng);
        Seq2Seq {
            config,
            params: p,
            src_emb,
            tgt_emb,
            enc_fwd,
            enc_bwd,
            bridge_w,
            bridge_b,
            dec,
            att_k,
            att_q,
            att_v,
            out_wc,
            out_bc,
            out_wo,
            out_bo,
        }
    }

    /// Rebuilds a model from parameters named as in [`Seq2Seq::new`].
    pub fn from_params(config: Seq2SeqConfig, params: ParamStore) -> Result<Self> {
        let fresh = Seq2Seq::new(config, Init::Zeros, &mut rand::rngs::mock::StepRng::new(0, 0));
        for (_, p) in fresh.params.iter() {
            let id = lookup(&params, &p.name)?;
            if params.value(id).shape() != p.value.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    params.value(id).shape(),
                    p.value.shape()
                )));
            }
        }
        let cells = |prefix: &str| -> Result<Vec<LstmCell>> {
            (0..config.layers)
                .map(|l| LstmCell::from_store(&params, &format!("{prefix}.{l}")))
                .collect()
        };
        Ok(Seq2Seq {
            config,
            src_emb: lookup(&params, "src_emb")?,
            tgt_emb: lookup(&params, "tgt_emb")?,
            enc_fwd: cells("enc_fwd")?,
            enc_bwd: cells("enc_bwd")?,
            bridge_w: lookup(&params, "bridge.w")?,
            bridge_b: lookup(&params, "bridge.b")?,
            dec: cells("dec")?,
            att_k: lookup(&params, "att.wk")?,
            att_q: lookup(&params, "att.wq")?,
            att_v: lookup(&params, "att.v")?,
            out_wc: lookup(&params, "out.wc")?,
            out_bc: lookup(&params, "out.bc")?,
            out_wo: lookup(&params, "out.wo")?,
            out_bo: lookup(&params, "out.bo")?,
            params,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.params.clone(),
            serde_json::json!({ "kind": "seq2seq", "config": self.config }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("seq2seq") {
            return Err(ModelError::Config("checkpoint does not hold a seq2seq model".into()));
        }
        let config = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| ModelError::Config(e.to_string()))?;
        Seq2Seq::from_params(config, ck.params.clone())
    }

    fn check_token(&self, t: TokenId, vocab: usize) -> Result<usize> {
        let t = t as usize;
        if t >= vocab {
            return Err(ModelError::BadToken { token: t, vocab });
        }
        Ok(t)
    }

    pub fn encode(&self, g: &Graph, src: &[TokenId]) -> Result<Encoded> {
        if src.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let d = self.config.dim;
        let zero = g.constant(Tensor::zeros(&[d]));
        let table = g.param(self.src_emb);
        let mut inputs = src
            .iter()
            .map(|&t| Ok(g.embedding(table, self.check_token(t, self.config.src_vocab)?)?))
            .collect::<Result<Vec<_>>>()?;
        let n = src.len();
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        for (cf, cb) in self.enc_fwd.iter().zip(&self.enc_bwd) {
            fwd = Vec::with_capacity(n);
            let (mut h, mut c) = (zero, zero);
            for &x in &inputs {
                (h, c) = cf.step(g, x, h, c)?;
                fwd.push(h);
            }
            bwd = vec![zero; n];
            let (mut h, mut c) = (zero, zero);
            for t in (0..n).rev() {
                (h, c) = cb.step(g, inputs[t], h, c)?;
                bwd[t] = h;
            }
            inputs = (0..n).map(|t| g.concat(&[fwd[t], bwd[t]])).collect::<std::result::Result<_, _>>()?;
        }
        let states = g.stack(&inputs)?;
        let keys = g.matmul(states, g.param(self.att_k))?;
        let last = g.concat(&[fwd[n - 1], bwd[0]])?;
        let summary = g.tanh(g.add(g.matmul(g.param(self.bridge_w), last)?, g.param(self.bridge_b))?);
        Ok(Encoded {
            states,
            keys,
            summary,
            len: n,
        })
    }

    pub fn initial_state(&self, g: &Graph, enc: &Encoded) -> DecoderState {
        let zero = g.constant(Tensor::zeros(&[self.config.dim]));
        DecoderState {
            h: vec![enc.summary; self.config.layers],
            c: vec![zero; self.config.layers],
            feed: zero,
        }
    }

    pub fn step(&self, g: &Graph, enc: &Encoded, state: &DecoderState, prev: TokenId) -> Result<StepOutput> {
        let prev = self.check_token(prev, self.config.tgt_vocab)?;
        let mut x = g.concat(&[g.embedding(g.param(self.tgt_emb), prev)?, state.feed])?;
        let mut h = Vec::with_capacity(self.dec.len());
        let mut c = Vec::with_capacity(self.dec.len());
        for (l, cell) in self.dec.iter().enumerate() {
            let (hl, cl) = cell.step(g, x, state.h[l], state.c[l])?;
            h.push(hl);
            c.push(cl);
            x = hl;
        }
        let top = x;
        let q = g.matmul(g.param(self.att_q), top)?;
        let scores = g.matmul(g.tanh(g.add_row(enc.keys, q)?), g.param(self.att_v))?;
        let attention = g.softmax(scores)?;
        let context = g.matmul(attention, enc.states)?;
        let feed = g.tanh(g.add(
            g.matmul(g.param(self.out_wc), g.concat(&[top, context])?)?,
            g.param(self.out_bc),
        )?);
        let logits = g.add(g.matmul(g.param(self.out_wo), feed)?, g.param(self.out_bo))?;
        Ok(StepOutput {
            log_probs: g.log_softmax(logits)?,
            attention,
            state: DecoderState { h, c, feed },
        })
    }

    /// Log-probability vectors under teacher forcing: inputs `<s> r_1..r_n`,
    /// one vector per label `r_1..r_n </s>`.
    pub fn teacher_forced(&self, g: &Graph, src: &[TokenId], tgt: &[TokenId]) -> Result<Vec<Var>> {
        let enc = self.encode(g, src)?;
        let mut state = self.initial_state(g, &enc);
        let mut out = Vec::with_capacity(tgt.len() + 1);
        let mut prev = BOS;
        for &t in tgt.iter().chain(std::iter::once(&EOS)) {
            let step = self.step(g, &enc, &state, prev)?;
            out.push(step.log_probs);
            state = step.state;
            prev = t;
        }
        Ok(out)
    }

    /// Samples up to `max_len` tokens, stopping after `</s>`.
    pub fn sample_in<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        src: &[TokenId],
        max_len: usize,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let enc = self.encode(g, src)?;
        let mut state = self.initial_state(g, &enc);
        let mut prev = BOS;
        let mut traj = Trajectory {
            tokens: Vec::new(),
            log_probs: Vec::new(),
            states: Vec::new(),
        };
        while traj.tokens.len() < max_len {
            let step = self.step(g, &enc, &state, prev)?;
            let t = g.with_value(step.log_probs, |lp| sample_index(lp.data(), rng));
            traj.log_probs.push(g.pick(step.log_probs, t)?);
            traj.states.push(step.state.top());
            traj.tokens.push(t as TokenId);
            state = step.state;
            prev = t as TokenId;
            if prev == EOS {
                break;
            }
        }
        Ok(traj)
    }

    pub fn sample_sequence<R: Rng + ?Sized>(&self, src: &[TokenId], max_len: usize, rng: &mut R) -> Result<Sample> {
        let g = Graph::new(&self.params);
        let traj = self.sample_in(&g, src, max_len, rng)?;
        Ok(Sample {
            tokens: traj.tokens,
            log_probs: traj.log_probs.iter().map(|&v| g.scalar_value(v)).collect(),
            states: traj.states.iter().map(|&v| g.value(v).into_data()).collect(),
        })
    }

    /// Sum of log-probabilities of `tgt </s>` given `src`.
    pub fn log_likelihood(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<f64> {
        let g = Graph::new(&self.params);
        let lps = self.teacher_forced(&g, src, tgt)?;
        Ok(tgt
            .iter()
            .chain(std::iter::once(&EOS))
            .zip(&lps)
            .map(|(&t, &lp)| g.with_value(lp, |v| v.data()[t as usize]))
            .sum())
    }
}
