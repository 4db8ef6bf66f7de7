use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{consecutive_counts, ngram_counts};

/// Weights of the consecutive-unigram term (`lambda[0]`) and of the 2-, 3-
/// and 4-gram terms (`lambda[1..4]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepWeights {
    pub lambda: [f64; 4],
}

impl Default for RepWeights {
    fn default() -> Self {
        RepWeights { lambda: [1.0; 4] }
    }
}

impl RepWeights {
    pub fn unigram(&self) -> f64 {
        self.lambda[0]
    }

    pub fn order(&self, n: usize) -> f64 {
        self.lambda[n - 1]
    }
}

fn consecutive_excess<T: Hash + Eq>(r: &[T], t: &[T]) -> usize {
    let rc = consecutive_counts(r);
    consecutive_counts(t)
        .iter()
        .map(|(w, &c)| c.saturating_sub(*rc.get(*w).unwrap_or(&0)))
        .sum()
}

/// Extended repetition score: pooled excess of consecutive unigrams and of
/// repeated 2/3/4-grams in `t` over `r`, normalized by the hypothesis
/// counts. Lower is better.
pub fn erep<T: Hash + Eq>(r: &[T], t: &[T], w: &RepWeights) -> f64 {
    let mut sigma = w.unigram() * consecutive_excess(r, t) as f64;
    let mut denom: usize = consecutive_counts(t).values().sum();
    for n in 2..=4 {
        let tc = ngram_counts(t, n);
        let rc = ngram_counts(r, n);
        let mut excess = 0usize;
        for (s, &c) in &tc {
            denom += c;
            if c >= 2 {
                excess += c.saturating_sub(*rc.get(s).unwrap_or(&0));
            }
        }
        sigma += w.order(n) * excess as f64;
    }
    if denom == 0 {
        0.0
    } else {
        100.0 * sigma / denom as f64
    }
}

/// Per-order repetition score. The n-gram term ranges over n-grams of the
/// reference, and the result is normalized by reference counts.
pub fn rep<T: Hash + Eq>(r: &[T], t: &[T], n: usize, w: &RepWeights) -> f64 {
    assert!((2..=4).contains(&n), "REP order must be 2, 3 or 4");
    let rc = ngram_counts(r, n);
    let tc = ngram_counts(t, n);
    let mut excess = 0usize;
    for (s, &c_r) in &rc {
        let c_t = *tc.get(s).unwrap_or(&0);
        if c_t >= 2 {
            excess += c_t.saturating_sub(c_r);
        }
    }
    let sigma = w.order(n) * excess as f64 + w.unigram() * consecutive_excess(r, t) as f64;
    let denom: usize = consecutive_counts(r).values().sum::<usize>() + rc.values().sum::<usize>();
    if denom == 0 {
        0.0
    } else {
        100.0 * sigma / denom as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn erep_examples() {
        let d = RepWeights::default();
        assert_eq!(erep(&w("a b c"), &w("a b c"), &d), 0.0);
        assert_relative_eq!(erep(&w("a b c"), &w("a b a b c"), &d), 100.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(erep(&w("a"), &w("a a"), &d), 50.0, epsilon = 1e-12);
        assert_eq!(erep(&w("a"), &w("b"), &d), 0.0);
        assert_eq!(erep::<&str>(&[], &[], &d), 0.0);
    }

    #[test]
    fn rep_examples() {
        let d = RepWeights::default();
        let r = w("a b c d");
        assert_eq!(rep(&r, &r, 2, &d), 0.0);
        assert_relative_eq!(rep(&r, &w("a b a b c d"), 2, &d), 100.0 / 3.0, epsilon = 1e-12);
        let no_bigram = RepWeights {
            lambda: [1.0, 0.0, 1.0, 1.0],
        };
        assert_eq!(rep(&r, &w("a b a b c d"), 2, &no_bigram), 0.0);
        assert_relative_eq!(rep(&r, &w("a a b c d"), 2, &no_bigram), 100.0 / 3.0, epsilon = 1e-12);
    }
}
