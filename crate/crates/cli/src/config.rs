use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use errsup::autodiff::Init;
use errsup::decoding::DecodeConfig;
use errsup::metrics::BootstrapConfig;
use errsup::training::{DiscConfig, MleConfig, RlConfig};
use serde::{Deserialize, Serialize};

/// Parameters of a randomly drawn synthetic transduction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of source symbols that expand to two target symbols.
    pub two_fraction: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            vocab_size: 30,
            min_len: 5,
            max_len: 15,
            two_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub dim: usize,
    pub layers: usize,
    /// Parameters start uniform in `[-init, init]`.
    pub init: f64,
}

impl ModelParams {
    pub fn init(&self) -> Init {
        Init::Uniform(self.init)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            dim: 48,
            layers: 1,
            init: 0.1,
        }
    }
}

fn default_discriminator() -> ModelParams {
    ModelParams {
        dim: 32,
        layers: 1,
        init: 0.08,
    }
}

/// Everything an experiment directory is built from. Unset fields take
/// their defaults; command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// A saved task spec; when absent a random task is drawn from `task`.
    pub task_spec: Option<PathBuf>,
    pub task: TaskParams,
    pub train_size: usize,
    pub dev_size: usize,
    /// Vocabulary cap for corpora that are not synthetic.
    pub vocab_max: usize,
    pub generator: ModelParams,
    pub discriminator: ModelParams,
    pub mle: MleConfig,
    pub disc: DiscConfig,
    pub rl: RlConfig,
    pub decode: DecodeConfig,
    pub bootstrap: BootstrapConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            task_spec: None,
            task: TaskParams::default(),
            train_size: 500,
            dev_size: 200,
            vocab_max: 10_000,
            generator: ModelParams::default(),
            discriminator: default_discriminator(),
            mle: MleConfig::default(),
            disc: DiscConfig {
                lr: 3e-3,
                ..DiscConfig::default()
            },
            rl: RlConfig {
                lambda_mixed: 0.5,
                lr: 1e-2,
                iterations: 300,
                eval_every: 50,
                ..RlConfig::default()
            },
            decode: DecodeConfig::default(),
            bootstrap: BootstrapConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Copies the experiment seed into every stage that draws randomness.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.mle.seed = seed;
        self.disc.seed = seed;
        self.disc.dev_seed = seed;
        self.rl.seed = seed;
        self.bootstrap.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.task_spec {
            if !p.exists() {
                bail!("task spec {} does not exist", p.display());
            }
        }
        if self.train_size == 0 || self.dev_size == 0 {
            bail!("train_size and dev_size must be positive");
        }
        if self.generator.dim == 0 || self.discriminator.dim < 2 {
            bail!("model dimensions must be positive (discriminator at least 2)");
        }
        if !(self.rl.lambda_mixed > 0.0 && self.rl.lambda_mixed <= 1.0) {
            bail!("lambda_mixed must lie in (0, 1], got {}", self.rl.lambda_mixed);
        }
        if !(0.0..=1.0).contains(&self.rl.reward.lambda_rl) {
            bail!("lambda_rl must lie in [0, 1], got {}", self.rl.reward.lambda_rl);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 4, "rl": {"lambda_mixed": 0.1}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.rl.lambda_mixed, 0.1);
        assert_eq!(cfg.rl.iterations, RlConfig::default().iterations);
        assert_eq!(cfg.train_size, 500);
    }

    #[test]
    fn rejects_bad_lambdas() {
        let mut cfg = ExperimentConfig::default();
        cfg.rl.lambda_mixed = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.rl.reward.lambda_rl = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"mle": {"iterations": 10}}"#);
        assert!(err.is_err());
    }
}
