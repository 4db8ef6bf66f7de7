use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Source positions linked in the source-reference and the
/// source-hypothesis alignments.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentCoverage {
    pub c_ref: BTreeSet<usize>,
    pub c_hyp: BTreeSet<usize>,
}

pub fn coverage_from_alignments(src_ref: &[(usize, usize)], src_hyp: &[(usize, usize)]) -> AlignmentCoverage {
    AlignmentCoverage {
        c_ref: src_ref.iter().map(|&(i, _)| i).collect(),
        c_hyp: src_hyp.iter().map(|&(i, _)| i).collect(),
    }
}

/// Percentage of reference-aligned source positions that the hypothesis
/// does not cover. Lower is better.
pub fn drop_score(cov: &AlignmentCoverage) -> f64 {
    if cov.c_ref.is_empty() {
        return 0.0;
    }
    let covered = cov.c_ref.intersection(&cov.c_hyp).count();
    100.0 * (1.0 - covered as f64 / cov.c_ref.len() as f64)
}

/// Index pairs of one longest common subsequence of `a` and `b`. The
/// backtrace prefers the earliest positions, so the result is deterministic.
pub fn lcs_matches<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    // table[i][j] = LCS of a[i..], b[j..]
    let mut table = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[at(i, j)] = if a[i] == b[j] {
                table[at(i + 1, j + 1)] + 1
            } else {
                table[at(i + 1, j)].max(table[at(i, j + 1)])
            };
        }
    }
    let mut out = Vec::with_capacity(table[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if table[at(i + 1, j)] >= table[at(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Derives a source-hypothesis alignment by composing the source-reference
/// links with an LCS matching of reference and hypothesis tokens.
pub fn project_alignment<T: PartialEq>(
    src_ref: &[(usize, usize)],
    reference: &[T],
    hypothesis: &[T],
) -> Vec<(usize, usize)> {
    let mut ref_to_hyp = vec![None; reference.len()];
    for (r, h) in lcs_matches(reference, hypothesis) {
        ref_to_hyp[r] = Some(h);
    }
    src_ref
        .iter()
        .filter_map(|&(s, r)| ref_to_hyp.get(r).copied().flatten().map(|h| (s, h)))
        .collect()
}
