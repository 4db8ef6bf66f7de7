use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{ngram_counts, MetricError};

pub const DEFAULT_ROUGE_BETA: f64 = 1.2;

fn clipped_matches<T: Hash + Eq>(r: &[T], t: &[T], n: usize) -> usize {
    let rc = ngram_counts(r, n);
    ngram_counts(t, n)
        .iter()
        .map(|(s, &c)| c.min(*rc.get(s).unwrap_or(&0)))
        .sum()
}

fn ngram_total(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

/// Sentence GLEU: the minimum of pooled 1..`max_n`-gram precision and recall.
pub fn gleu<T: Hash + Eq>(r: &[T], t: &[T], max_n: usize) -> f64 {
    let (mut matches, mut hyp_total, mut ref_total) = (0, 0, 0);
    for n in 1..=max_n {
        matches += clipped_matches(r, t, n);
        hyp_total += ngram_total(t.len(), n);
        ref_total += ngram_total(r.len(), n);
    }
    if hyp_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let precision = matches as f64 / hyp_total as f64;
    let recall = matches as f64 / ref_total as f64;
    100.0 * precision.min(recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bleu {
    pub bleu: f64,
    pub brevity_penalty: f64,
    pub precisions: Vec<f64>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// Unsmoothed corpus BLEU with the brevity penalty reported separately.
pub fn corpus_bleu<T, S>(refs: &[S], hyps: &[S], max_n: usize) -> Result<Bleu, MetricError>
where
    T: Hash + Eq,
    S: AsRef<[T]>,
{
    if refs.len() != hyps.len() {
        return Err(MetricError::LengthMismatch(refs.len(), hyps.len()));
    }
    if refs.is_empty() {
        return Err(MetricError::TooFew(1));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (r, t) in refs.iter().zip(hyps) {
        let (r, t) = (r.as_ref(), t.as_ref());
        hyp_len += t.len();
        ref_len += r.len();
        for n in 1..=max_n {
            matches[n - 1] += clipped_matches(r, t, n);
            totals[n - 1] += ngram_total(t.len(), n);
        }
    }
    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    // Orders for which the corpus has no hypothesis n-grams at all are left
    // out of the geometric mean, so very short corpora are still scored.
    let used: Vec<f64> = precisions
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&p, _)| p)
        .collect();
    let bleu = if used.is_empty() || used.contains(&0.0) {
        0.0
    } else {
        let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(Bleu {
        bleu,
        brevity_penalty,
        precisions,
        hyp_len,
        ref_len,
    })
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with recall weighted by `beta`.
pub fn rouge_l<T: PartialEq>(r: &[T], t: &[T], beta: f64) -> f64 {
    let lcs = lcs_len(r, t);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / t.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    let b2 = beta * beta;
    100.0 * (1.0 + b2) * p * rec / (rec + b2 * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn gleu_examples() {
        let r = w("a b c d");
        assert_eq!(gleu(&r, &r, 4), 100.0);
        assert_relative_eq!(gleu(&r, &w("a b c c"), 4), 60.0, epsilon = 1e-12);
        assert_eq!(gleu(&r, &w("x y"), 4), 0.0);
    }

    #[test]
    fn bleu_examples() {
        let refs = vec![w("a b c d"), w("e f g h i")];
        let b = corpus_bleu(&refs, &refs, 4).unwrap();
        assert_relative_eq!(b.bleu, 100.0, epsilon = 1e-12);
        assert_eq!(b.brevity_penalty, 1.0);

        // precisions 4/6, 3/5, 2/4, 1/3 and no brevity penalty
        let b = corpus_bleu(&[w("a b c d")], &[w("a b c d e f")], 4).unwrap();
        let expected = 100.0 * (4.0 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0f64).powf(0.25);
        assert_relative_eq!(b.bleu, expected, epsilon = 1e-9);
        assert_relative_eq!(b.bleu, 50.813274815461476, epsilon = 1e-9);
        assert_eq!(b.brevity_penalty, 1.0);

        let b = corpus_bleu(&[w("a b c d e f")], &[w("a b c d")], 4).unwrap();
        assert!(b.brevity_penalty < 1.0);
        assert_relative_eq!(b.brevity_penalty, (1.0f64 - 6.0 / 4.0).exp(), epsilon = 1e-12);

        assert_eq!(corpus_bleu(&[w("a")], &[], 4), Err(MetricError::LengthMismatch(1, 0)));
        // single identical pair shorter than the max order
        let b = corpus_bleu(&[w("a b")], &[w("a b")], 4).unwrap();
        assert_relative_eq!(b.bleu, 100.0, epsilon = 1e-12);
        // a zero precision at an order that does occur still zeroes the score
        let b = corpus_bleu(&[w("a b c d")], &[w("a c b d")], 4).unwrap();
        assert_eq!(b.bleu, 0.0);
    }

    #[test]
    fn rouge_examples() {
        let r = w("a b c d");
        assert_relative_eq!(rouge_l(&r, &r, 1.2), 100.0, epsilon = 1e-12);
        // LCS 3, P = 1, R = 0.75
        let expected = 100.0 * 2.44 * 0.75 / (0.75 + 1.44);
        assert_relative_eq!(rouge_l(&r, &w("a c d"), 1.2), expected, epsilon = 1e-12);
        assert_eq!(rouge_l(&r, &w("x y"), 1.2), 0.0);
        let (a, b) = (w("a b c d e"), w("b a c e d"));
        assert_relative_eq!(rouge_l(&a, &b, 1.0), rouge_l(&b, &a, 1.0), epsilon = 1e-12);
    }
}
