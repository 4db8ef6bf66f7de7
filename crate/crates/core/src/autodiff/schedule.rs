use serde::{Deserialize, Serialize};

/// Linear warmup from `lr_ini` to `lr_max` over `n_wm` steps, then one
/// cosine half-period down to zero over `n_wm * n_cs` steps. The rate stays
/// at zero once the cycle is over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmupCosine {
    pub lr_ini: f64,
    pub lr_max: f64,
    pub n_wm: u64,
    pub n_cs: f64,
}

impl WarmupCosine {
    pub fn lr(&self, step: u64) -> f64 {
        if step <= self.n_wm {
            if self.n_wm == 0 {
                return self.lr_max;
            }
            return self.lr_ini + step as f64 * (self.lr_max - self.lr_ini) / self.n_wm as f64;
        }
        let cycle = self.n_wm as f64 * self.n_cs;
        let progress = ((step - self.n_wm) as f64 / cycle).min(1.0);
        let eta = 0.5 + 0.5 * (std::f64::consts::PI * progress).cos();
        (self.lr_max * eta).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDecision {
    pub lr: f64,
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// Halves the learning rate whenever a development score is worse than the
/// best seen so far; training stops after `max_halvings` halvings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauHalving {
    pub lr: f64,
    pub halvings: u32,
    pub max_halvings: u32,
    pub best: Option<f64>,
    pub higher_is_better: bool,
}

impl PlateauHalving {
    pub fn new(lr: f64, higher_is_better: bool) -> Self {
        PlateauHalving {
            lr,
            halvings: 0,
            max_halvings: 5,
            best: None,
            higher_is_better,
        }
    }

    pub fn observe(&mut self, score: f64) -> PlateauDecision {
        let (improved, worse) = match self.best {
            None => (true, false),
            Some(b) if self.higher_is_better => (score > b, score < b),
            Some(b) => (score < b, score > b),
        };
        if improved {
            self.best = Some(score);
        }
        if worse && self.halvings < self.max_halvings {
            self.lr *= 0.5;
            self.halvings += 1;
        }
        PlateauDecision {
            lr: self.lr,
            improved,
            halved: worse,
            stop: self.halvings >= self.max_halvings,
        }
    }
}
