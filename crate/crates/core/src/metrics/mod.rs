//! Sequence-level evaluation. Every score is reported in `[0, 100]` except
//! Pearson's coefficient.
//!
//! All functions are generic over the token type so they work equally on
//! token ids and on whitespace-split strings read from files.

mod bootstrap;
mod coverage;
mod overlap;
mod repetition;

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{paired_bootstrap, BootstrapConfig, BootstrapResult, Winner};
pub use coverage::{coverage_from_alignments, drop_score, lcs_matches, project_alignment, AlignmentCoverage};
pub use overlap::{corpus_bleu, gleu, rouge_l, Bleu, DEFAULT_ROUGE_BETA};
pub use repetition::{erep, rep, RepWeights};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} references vs {1} hypotheses")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} items")]
    TooFew(usize),
    #[error("zero variance")]
    ZeroVariance,
}

/// Counts of every n-gram of order `n`.
pub(crate) fn ngram_counts<T: Hash + Eq>(x: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || x.len() < n {
        return counts;
    }
    for w in x.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Per token `w`, the number of positions `p` with `x[p] == x[p+1] == w`.
pub(crate) fn consecutive_counts<T: Hash + Eq>(x: &[T]) -> HashMap<&T, usize> {
    let mut counts = HashMap::new();
    for w in x.windows(2) {
        if w[0] == w[1] {
            *counts.entry(&w[0]).or_insert(0) += 1;
        }
    }
    counts
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricError::TooFew(2));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Corpus-level scorers usable with [`paired_bootstrap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu,
    Gleu,
    Erep,
    RougeL,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Erep)
    }

    /// BLEU is computed at corpus level; the other metrics are averaged
    /// over sentences.
    pub fn score<T, S>(self, refs: &[S], hyps: &[S]) -> f64
    where
        T: Hash + Eq,
        S: AsRef<[T]>,
    {
        assert_eq!(refs.len(), hyps.len(), "reference/hypothesis count mismatch");
        match self {
            Metric::Bleu => corpus_bleu(refs, hyps, 4).map(|b| b.bleu).unwrap_or(0.0),
            Metric::Gleu => mean(refs, hyps, |r, t| gleu(r, t, 4)),
            Metric::Erep => mean(refs, hyps, |r, t| erep(r, t, &RepWeights::default())),
            Metric::RougeL => mean(refs, hyps, |r, t| rouge_l(r, t, DEFAULT_ROUGE_BETA)),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "gleu" => Ok(Metric::Gleu),
            "erep" => Ok(Metric::Erep),
            "rouge_l" | "rouge-l" | "rougel" => Ok(Metric::RougeL),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

fn mean<T, S>(refs: &[S], hyps: &[S], f: impl Fn(&[T], &[T]) -> f64) -> f64
where
    S: AsRef<[T]>,
{
    if refs.is_empty() {
        return 0.0;
    }
    refs.iter()
        .zip(hyps)
        .map(|(r, t)| f(r.as_ref(), t.as_ref()))
        .sum::<f64>()
        / refs.len() as f64
}

/// Mean of sentence-level eREP over a corpus.
pub fn corpus_erep<T: Hash + Eq, S: AsRef<[T]>>(refs: &[S], hyps: &[S]) -> f64 {
    Metric::Erep.score(refs, hyps)
}

/// Mean of sentence-level GLEU over a corpus.
pub fn corpus_gleu<T: Hash + Eq, S: AsRef<[T]>>(refs: &[S], hyps: &[S]) -> f64 {
    Metric::Gleu.score(refs, hyps)
}

pub fn corpus_rouge_l<T: Hash + Eq, S: AsRef<[T]>>(refs: &[S], hyps: &[S]) -> f64 {
    Metric::RougeL.score(refs, hyps)
}

/// Sentence-level scores of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub erep: f64,
    /// Present when a source-reference alignment is available.
    pub drop: Option<f64>,
    pub gleu: f64,
    pub rouge_l: f64,
}

/// Corpus totals plus the per-sentence scores they are computed from.
/// eREP, DROP, GLEU and ROUGE-L are sentence means; BLEU is corpus-level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub erep: f64,
    pub drop: Option<f64>,
    pub bleu: f64,
    pub bp: f64,
    pub gleu: f64,
    pub rouge_l: f64,
    pub sentences: Vec<SentenceScores>,
}

/// DROP of one hypothesis, projecting the gold source-reference alignment
/// onto the hypothesis through an LCS matching.
pub fn sentence_drop<T: PartialEq>(src_ref: &[(usize, usize)], reference: &[T], hypothesis: &[T]) -> f64 {
    let src_hyp = project_alignment(src_ref, reference, hypothesis);
    drop_score(&coverage_from_alignments(src_ref, &src_hyp))
}

pub fn score_corpus<T, S>(
    refs: &[S],
    hyps: &[S],
    alignments: Option<&[Vec<(usize, usize)>]>,
) -> Result<CorpusScores, MetricError>
where
    T: Hash + Eq,
    S: AsRef<[T]>,
{
    if refs.len() != hyps.len() {
        return Err(MetricError::LengthMismatch(refs.len(), hyps.len()));
    }
    if let Some(a) = alignments {
        if a.len() != refs.len() {
            return Err(MetricError::LengthMismatch(a.len(), refs.len()));
        }
    }
    let w = RepWeights::default();
    let sentences: Vec<SentenceScores> = refs
        .iter()
        .zip(hyps)
        .enumerate()
        .map(|(k, (r, t))| {
            let (r, t) = (r.as_ref(), t.as_ref());
            SentenceScores {
                erep: erep(r, t, &w),
                drop: alignments.map(|a| sentence_drop(&a[k], r, t)),
                gleu: gleu(r, t, 4),
                rouge_l: rouge_l(r, t, DEFAULT_ROUGE_BETA),
            }
        })
        .collect();
    let n = sentences.len().max(1) as f64;
    let bleu = corpus_bleu(refs, hyps, 4)?;
    Ok(CorpusScores {
        erep: sentences.iter().map(|s| s.erep).sum::<f64>() / n,
        drop: alignments.map(|_| sentences.iter().filter_map(|s| s.drop).sum::<f64>() / n),
        bleu: bleu.bleu,
        bp: bleu.brevity_penalty,
        gleu: sentences.iter().map(|s| s.gleu).sum::<f64>() / n,
        rouge_l: sentences.iter().map(|s| s.rouge_l).sum::<f64>() / n,
        sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pearson_cases() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        assert_relative_eq!(pearson(&xs, &xs).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_relative_eq!(pearson(&xs, &neg).unwrap(), -1.0, epsilon = 1e-12);
        // 5 / sqrt(2 * 38/3)
        let expected = 5.0 / (2.0f64 * 38.0 / 3.0).sqrt();
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 0.99340, epsilon = 1e-5);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(MetricError::ZeroVariance));
        assert_eq!(pearson(&[1.0], &[2.0]), Err(MetricError::TooFew(2)));
        assert_eq!(pearson(&[1.0, 2.0], &[2.0]), Err(MetricError::LengthMismatch(2, 1)));
    }

    #[test]
    fn identical_corpus_scores() {
        let refs = vec![vec![1, 2, 3, 4, 5], vec![6, 7]];
        let align = vec![vec![(0, 0), (1, 1), (2, 3)], vec![(0, 0), (1, 1)]];
        let s = score_corpus(&refs, &refs, Some(&align)).unwrap();
        assert_eq!(s.erep, 0.0);
        assert_eq!(s.drop, Some(0.0));
        assert_eq!(s.bleu, 100.0);
        assert_eq!(s.gleu, 100.0);
        assert_eq!(s.sentences.len(), 2);
    }

    #[test]
    fn dropped_aligned_token_is_counted() {
        // source 0 -> ref 0, source 1 -> ref 1; hypothesis loses ref token 1
        let d = sentence_drop(&[(0, 0), (1, 1)], &[5, 6], &[5]);
        assert_eq!(d, 50.0);
    }

    #[test]
    fn profile_totals() {
        let x = [1, 1, 2, 1, 1, 1];
        for n in 1..=4 {
            let total: usize = ngram_counts(&x, n).values().sum();
            assert_eq!(total, x.len().saturating_sub(n - 1));
        }
        let cc = consecutive_counts(&x);
        assert_eq!(cc[&1], 3);
        assert_eq!(cc.get(&2), None);
        assert!(ngram_counts(&x, 7).is_empty());
    }
}
