use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Heavy-ball momentum: `buf = mu*buf + g; w -= lr*buf`.
    SgdMomentum { momentum: f64, weight_decay: f64 },
    /// Adam with L2 weight decay folded into the gradient.
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
    /// Adam with decoupled weight decay applied to the weights.
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    pub fn sgd_momentum(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum {
            momentum,
            weight_decay: 0.0,
        }
    }

    pub fn adam(weight_decay: f64) -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn adam_w(weight_decay: f64) -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Optimizer with per-parameter state. Reads the gradients stored in the
/// [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub steps: u64,
    /// Momentum buffer (SGD) or first moment (Adam).
    pub first: Vec<Tensor>,
    /// Second moment (Adam only).
    pub second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        let second = match kind {
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
            _ => zeros.clone(),
        };
        Optimizer {
            kind,
            steps: 0,
            first: zeros,
            second,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        for (k, p) in store.params_mut().iter_mut().enumerate() {
            let w = p.value.data_mut();
            let g = p.grad.data();
            match self.kind {
                OptimizerKind::SgdMomentum { momentum, weight_decay } => {
                    let buf = self.first[k].data_mut();
                    for i in 0..w.len() {
                        let gi = g[i] + weight_decay * w[i];
                        buf[i] = momentum * buf[i] + gi;
                        w[i] -= lr * buf[i];
                    }
                }
                OptimizerKind::Adam {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                }
                | OptimizerKind::AdamW {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                } => {
                    let decoupled = matches!(self.kind, OptimizerKind::AdamW { .. });
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = self.first[k].data_mut();
                    let v = self.second[k].data_mut();
                    for i in 0..w.len() {
                        let gi = if decoupled { g[i] } else { g[i] + weight_decay * w[i] };
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        if decoupled {
                            w[i] -= lr * (update + weight_decay * w[i]);
                        } else {
                            w[i] -= lr * update;
                        }
                    }
                }
            }
        }
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0);
    let norm = store.grad_norm();
    if norm > max_norm {
        let c = max_norm / norm;
        for p in store.params_mut() {
            p.grad.scale_assign(c);
        }
    }
    norm
}
