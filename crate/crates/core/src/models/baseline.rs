use serde::{Deserialize, Serialize};

/// Linear regressor `b(h) = w·h + bias` on a decoder hidden state, trained
/// by squared error against observed rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRegressor {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BaselineRegressor {
    pub fn zeros(dim: usize) -> Self {
        BaselineRegressor {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        assert_eq!(state.len(), self.weights.len(), "baseline input size");
        self.bias + self.weights.iter().zip(state).map(|(w, h)| w * h).sum::<f64>()
    }

    /// Mean of `(b(h) - r)^2` over the pairs.
    pub fn mse(&self, states: &[&[f64]], rewards: &[f64]) -> f64 {
        let n = states.len().max(1) as f64;
        states
            .iter()
            .zip(rewards)
            .map(|(h, r)| (self.predict(h) - r).powi(2))
            .sum::<f64>()
            / n
    }

    /// One gradient step on the mean squared error. Returns the loss
    /// before the update.
    pub fn sgd_step(&mut self, states: &[&[f64]], rewards: &[f64], lr: f64) -> f64 {
        assert_eq!(states.len(), rewards.len());
        if states.is_empty() {
            return 0.0;
        }
        let n = states.len() as f64;
        let mut gw = vec![0.0; self.dim()];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (h, &r) in states.iter().zip(rewards) {
            let e = self.predict(h) - r;
            loss += e * e;
            gb += 2.0 * e;
            for (g, x) in gw.iter_mut().zip(h.iter()) {
                *g += 2.0 * e * x;
            }
        }
        self.bias -= lr * gb / n;
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= lr * g / n;
        }
        loss / n
    }
}
