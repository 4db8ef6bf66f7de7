use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 1000,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub score_a: f64,
    pub score_b: f64,
    pub winner: Winner,
    /// Fraction of resamples in which the observed winner does not win.
    pub p_value: f64,
    pub n_resamples: usize,
}

impl BootstrapResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.winner != Winner::Tie && self.p_value < alpha
    }
}

/// Paired bootstrap resampling over sentence indices.
///
/// Resample `k` draws from its own ChaCha stream derived from `cfg.seed`,
/// so the result does not depend on the number of worker threads. Ties,
/// both in the observed comparison and within a resample, count against
/// significance.
pub fn paired_bootstrap<S, F>(
    score: F,
    higher_is_better: bool,
    refs: &[S],
    hyps_a: &[S],
    hyps_b: &[S],
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, MetricError>
where
    S: Sync,
    F: Fn(&[&S], &[&S]) -> f64 + Sync + Send,
{
    if refs.len() != hyps_a.len() || refs.len() != hyps_b.len() {
        return Err(MetricError::LengthMismatch(refs.len(), hyps_a.len().min(hyps_b.len())));
    }
    if refs.is_empty() {
        return Err(MetricError::TooFew(1));
    }
    if cfg.n_resamples < 100 {
        return Err(MetricError::TooFew(100));
    }
    let all: Vec<usize> = (0..refs.len()).collect();
    let eval = |idx: &[usize]| {
        let r: Vec<&S> = idx.iter().map(|&i| &refs[i]).collect();
        let a: Vec<&S> = idx.iter().map(|&i| &hyps_a[i]).collect();
        let b: Vec<&S> = idx.iter().map(|&i| &hyps_b[i]).collect();
        (score(&r, &a), score(&r, &b))
    };
    let better = |x: f64, y: f64| if higher_is_better { x > y } else { x < y };
    let (score_a, score_b) = eval(&all);
    let winner = if better(score_a, score_b) {
        Winner::A
    } else if better(score_b, score_a) {
        Winner::B
    } else {
        Winner::Tie
    };
    if winner == Winner::Tie {
        return Ok(BootstrapResult {
            score_a,
            score_b,
            winner,
            p_value: 1.0,
            n_resamples: cfg.n_resamples,
        });
    }
    let n = refs.len();
    let failures: usize = cfg
        .execution
        .map_range(cfg.n_resamples, |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let (a, b) = eval(&idx);
            let won = match winner {
                Winner::A => better(a, b),
                _ => better(b, a),
            };
            usize::from(!won)
        })
        .into_iter()
        .sum();
    Ok(BootstrapResult {
        score_a,
        score_b,
        winner,
        p_value: failures as f64 / cfg.n_resamples as f64,
        n_resamples: cfg.n_resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;

    fn corpus(n: usize) -> Vec<Vec<u32>> {
        (0..n).map(|i| (0..8).map(|k| ((i * 7 + k * 3) % 11) as u32).collect()).collect()
    }

    #[test]
    fn identical_systems_never_significant() {
        let refs = corpus(50);
        let hyps: Vec<Vec<u32>> = refs.iter().map(|r| r[..6].to_vec()).collect();
        let r = paired_bootstrap(|r, h| Metric::Bleu.score(r, h), true, &refs, &hyps, &hyps, &BootstrapConfig::default())
            .unwrap();
        assert_eq!(r.winner, Winner::Tie);
        assert!(r.p_value >= 0.5);
        assert!(!r.significant(0.05));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let refs = corpus(60);
        let a: Vec<Vec<u32>> = refs.iter().map(|r| r[..7].to_vec()).collect();
        let b: Vec<Vec<u32>> = refs.iter().enumerate().map(|(i, r)| if i % 2 == 0 { r.clone() } else { r[..4].to_vec() }).collect();
        let score = |r: &[&Vec<u32>], h: &[&Vec<u32>]| Metric::Gleu.score(r, h);
        let mut cfg = BootstrapConfig {
            n_resamples: 300,
            seed: 9,
            execution: Execution::Parallel,
        };
        let p1 = paired_bootstrap(score, true, &refs, &a, &b, &cfg).unwrap();
        let p2 = paired_bootstrap(score, true, &refs, &a, &b, &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let p3 = paired_bootstrap(score, true, &refs, &a, &b, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1, p3);
    }

    #[test]
    fn rejects_bad_input() {
        let refs = corpus(5);
        let cfg = BootstrapConfig {
            n_resamples: 10,
            ..Default::default()
        };
        let s = |r: &[&Vec<u32>], h: &[&Vec<u32>]| Metric::Bleu.score(r, h);
        assert_eq!(
            paired_bootstrap(s, true, &refs, &refs, &refs, &cfg),
            Err(MetricError::TooFew(100))
        );
        assert!(paired_bootstrap(s, true, &refs, &refs[..3], &refs, &BootstrapConfig::default()).is_err());
    }
}
