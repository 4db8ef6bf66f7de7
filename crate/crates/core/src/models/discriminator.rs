use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Graph, Init, ParamId, ParamStore, Tensor, Var};
use crate::corpus::TokenId;

use super::lstm::{lookup, LstmCell};
use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Hidden size `d_h`; the head's inner layer has `d_h / 2` units.
    pub dim: usize,
    pub layers: usize,
}

impl DiscriminatorConfig {
    pub fn new(src_vocab: usize, tgt_vocab: usize, dim: usize) -> Self {
        DiscriminatorConfig {
            src_vocab,
            tgt_vocab,
            dim,
            layers: 1,
        }
    }
}

/// Source LSTM encoder, target LSTM encoder started from the source
/// summary, max-pooling over target states and a two-layer head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub params: ParamStore,
    src_emb: ParamId,
    tgt_emb: ParamId,
    src_enc: Vec<LstmCell>,
    tgt_enc: Vec<LstmCell>,
    wh: ParamId,
    bh: ParamId,
    wo: ParamId,
    bo: ParamId,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, init: Init, rng: &mut R) -> Self {
        let DiscriminatorConfig {
            src_vocab,
            tgt_vocab,
            dim: d,
            layers,
        } = config;
        assert!(layers >= 1 && d >= 2);
        let mut p = ParamStore::new();
        let src_emb = p.add("src_emb", &[src_vocab, d], init, rng);
        let tgt_emb = p.add("tgt_emb", &[tgt_vocab, d], init, rng);
        let src_enc = (0..layers)
            .map(|l| LstmCell::new(&mut p, &format!("src_enc.{l}"), d, d, init, rng))
            .collect();
        let tgt_enc = (0..layers)
            .map(|l| LstmCell::new(&mut p, &format!("tgt_enc.{l}"), d, d, init, rng))
            .collect();
        let wh = p.add("head.wh", &[d / 2, d], init, rng);
        let bh = p.add("head.bh", &[d / 2], init, rng);
        let wo = p.add("head.wo", &[d / 2], init, rng);
        let bo = p.add("head.bo", &[], init, rng);
        Discriminator {
            config,
            params: p,
            src_emb,
            tgt_emb,
            src_enc,
            tgt_enc,
            wh,
            bh,
            wo,
            bo,
        }
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamStore) -> Result<Self> {
        let fresh = Discriminator::new(config, Init::Zeros, &mut rand::rngs::mock::StepRng::new(0, 0));
        for (_, p) in fresh.params.iter() {
            let id = lookup(&params, &p.name)?;
            if params.value(id).shape() != p.value.shape() {
                return Err(ModelError::Config(format!("parameter {} has the wrong shape", p.name)));
            }
        }
        let cells = |prefix: &str| -> Result<Vec<LstmCell>> {
            (0..config.layers)
                .map(|l| LstmCell::from_store(&params, &format!("{prefix}.{l}")))
                .collect()
        };
        Ok(Discriminator {
            config,
            src_emb: lookup(&params, "src_emb")?,
            tgt_emb: lookup(&params, "tgt_emb")?,
            src_enc: cells("src_enc")?,
            tgt_enc: cells("tgt_enc")?,
            wh: lookup(&params, "head.wh")?,
            bh: lookup(&params, "head.bh")?,
            wo: lookup(&params, "head.wo")?,
            bo: lookup(&params, "head.bo")?,
            params,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.params.clone(),
            serde_json::json!({ "kind": "discriminator", "config": self.config }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("discriminator") {
            return Err(ModelError::Config("checkpoint does not hold a discriminator".into()));
        }
        let config = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| ModelError::Config(e.to_string()))?;
        Discriminator::from_params(config, ck.params.clone())
    }

    fn run(&self, g: &Graph, cells: &[LstmCell], table: ParamId, vocab: usize, tokens: &[TokenId], init: &[Var]) -> Result<(Vec<Var>, Vec<Var>)> {
        let zero = g.constant(Tensor::zeros(&[self.config.dim]));
        let table = g.param(table);
        let mut xs = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let t = t as usize;
            if t >= vocab {
                return Err(ModelError::BadToken { token: t, vocab });
            }
            xs.push(g.embedding(table, t)?);
        }
        let mut last = Vec::with_capacity(cells.len());
        for (l, cell) in cells.iter().enumerate() {
            let (mut h, mut c) = (init.get(l).copied().unwrap_or(zero), zero);
            for x in xs.iter_mut() {
                (h, c) = cell.step(g, *x, h, c)?;
                *x = h;
            }
            last.push(h);
        }
        Ok((xs, last))
    }

    /// Pre-sigmoid score; `D(s, t) = sigmoid(logit)`.
    pub fn logit(&self, g: &Graph, src: &[TokenId], tgt: &[TokenId]) -> Result<Var> {
        if src.is_empty() {
            return Err(ModelError::EmptySource);
        }
        if tgt.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let (_, summary) = self.run(g, &self.src_enc, self.src_emb, self.config.src_vocab, src, &[])?;
        let (states, _) = self.run(g, &self.tgt_enc, self.tgt_emb, self.config.tgt_vocab, tgt, &summary)?;
        let pooled = g.max_over_time(g.stack(&states)?)?;
        let hidden = g.relu(g.add(g.matmul(g.param(self.wh), pooled)?, g.param(self.bh))?);
        Ok(g.add(g.dot(g.param(self.wo), hidden)?, g.param(self.bo))?)
    }

    /// Max-pooled target representation.
    pub fn pooled(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<Vec<f64>> {
        let g = Graph::new(&self.params);
        let (_, summary) = self.run(&g, &self.src_enc, self.src_emb, self.config.src_vocab, src, &[])?;
        let (states, _) = self.run(&g, &self.tgt_enc, self.tgt_emb, self.config.tgt_vocab, tgt, &summary)?;
        Ok(g.value(g.max_over_time(g.stack(&states)?)?).into_data())
    }

    pub fn discriminate(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<f64> {
        let g = Graph::new(&self.params);
        let l = self.logit(&g, src, tgt)?;
        Ok(g.scalar_value(g.sigmoid(l)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::new(DiscriminatorConfig::new(6, 6, 4), Init::Zeros, &mut rng);
        assert_eq!(d.discriminate(&[3, 4], &[5, 5, 3]).unwrap(), 0.5);
    }

    #[test]
    fn output_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Discriminator::new(DiscriminatorConfig::new(8, 8, 6), Init::Uniform(1.0), &mut rng);
        let y = d.discriminate(&[3, 4, 7], &[5, 6]).unwrap();
        assert!(y > 0.0 && y < 1.0);
        assert!(matches!(d.discriminate(&[3], &[]), Err(ModelError::EmptyTarget)));
    }

    #[test]
    fn appending_a_step_never_lowers_pooled_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Discriminator::new(DiscriminatorConfig::new(8, 8, 6), Init::Uniform(0.5), &mut rng);
        let short = d.pooled(&[3, 4], &[5, 6, 7]).unwrap();
        let long = d.pooled(&[3, 4], &[5, 6, 7, 3]).unwrap();
        for (a, b) in short.iter().zip(&long) {
            assert!(b >= a);
        }
    }

    #[test]
    fn target_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Discriminator::new(DiscriminatorConfig::new(8, 8, 16), Init::Uniform(0.5), &mut rng);
        let a = d.discriminate(&[3, 4], &[5, 6, 7]).unwrap();
        let b = d.discriminate(&[3, 4], &[7, 5, 6]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Discriminator::new(DiscriminatorConfig::new(8, 8, 6), Init::Uniform(0.5), &mut rng);
        let back = Discriminator::from_checkpoint(&d.to_checkpoint()).unwrap();
        assert_eq!(
            d.discriminate(&[3], &[4, 5]).unwrap().to_bits(),
            back.discriminate(&[3], &[4, 5]).unwrap().to_bits()
        );
    }
}
