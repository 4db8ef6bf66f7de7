use rand::Rng;

use crate::autodiff::{AdError, Graph, Init, ParamId, ParamStore, Var};

use super::Result;

/// One LSTM layer: `[i f g o] = W·[x; h] + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    w: ParamId,
    b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), &[4 * hidden, input + hidden], init, rng);
        let b = store.add(&format!("{name}.b"), &[4 * hidden], init, rng);
        LstmCell { w, b, input, hidden }
    }

    /// Looks up a cell created with [`LstmCell::new`] under `name`.
    pub fn from_store(store: &ParamStore, name: &str) -> Result<Self> {
        let w = lookup(store, &format!("{name}.w"))?;
        let b = lookup(store, &format!("{name}.b"))?;
        let shape = store.value(w).shape();
        let hidden = shape[0] / 4;
        Ok(LstmCell {
            w,
            b,
            input: shape[1] - hidden,
            hidden,
        })
    }

    /// Returns the new `(h, c)`.
    pub fn step(&self, g: &Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let d = self.hidden;
        let xh = g.concat(&[x, h])?;
        let z = g.add(g.matmul(g.param(self.w), xh)?, g.param(self.b))?;
        let i = g.sigmoid(g.slice(z, 0, d)?);
        let f = g.sigmoid(g.slice(z, d, d)?);
        let u = g.tanh(g.slice(z, 2 * d, d)?);
        let o = g.sigmoid(g.slice(z, 3 * d, d)?);
        let c = g.add(g.mul(f, c)?, g.mul(i, u)?)?;
        let h = g.mul(o, g.tanh(c))?;
        Ok((h, c))
    }
}

pub(crate) fn lookup(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .find(name)
        .ok_or_else(|| AdError::MissingParam(name.to_string()).into())
}
