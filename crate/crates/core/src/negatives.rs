//! Artificial negative examples: references corrupted so that they are
//! guaranteed to contain one targeted error type.
//!
//! Edits are expressed with 1-based indices: a span of `span_len` tokens
//! starting at token `start`, and insertion points "after token `p`"
//! (`p = 0` inserts before the first token).

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TokenId, EOS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NegativeError {
    #[error("cannot corrupt empty sentence")]
    EmptySentence,
    #[error("unknown error type {0:?} (expected repeat or drop)")]
    UnknownType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatConfig {
    /// Longest span that may be duplicated.
    pub m_rep: usize,
    /// Largest number of inserted copies.
    pub n_rep: usize,
}

impl Default for RepeatConfig {
    fn default() -> Self {
        RepeatConfig { m_rep: 4, n_rep: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropConfig {
    /// Longest span that may be deleted.
    pub m_drop: usize,
}

impl Default for DropConfig {
    fn default() -> Self {
        DropConfig { m_drop: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatEdit {
    pub span_len: usize,
    pub start: usize,
    /// Sorted, distinct "after token p" insertion points.
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropEdit {
    pub span_len: usize,
    pub start: usize,
}

/// Insertion points that do not split the span `start..start+span_len-1`.
pub fn legal_insertion_points(n: usize, span_len: usize, start: usize) -> Vec<usize> {
    (0..start).chain(start + span_len - 1..=n).collect()
}

pub fn sample_repeat_edit<R: Rng + ?Sized>(n: usize, cfg: &RepeatConfig, rng: &mut R) -> RepeatEdit {
    debug_assert!(n >= 1);
    let span_len = rng.gen_range(1..=cfg.m_rep.min(n));
    let start = rng.gen_range(1..=n - span_len + 1);
    let copies = rng.gen_range(1..=cfg.n_rep);
    let legal = legal_insertion_points(n, span_len, start);
    let mut positions: Vec<usize> = index::sample(rng, legal.len(), copies.min(legal.len()))
        .into_iter()
        .map(|k| legal[k])
        .collect();
    positions.sort_unstable();
    RepeatEdit {
        span_len,
        start,
        positions,
    }
}

pub fn apply_repeat<T: Clone>(r: &[T], edit: &RepeatEdit) -> Vec<T> {
    let span = &r[edit.start - 1..edit.start - 1 + edit.span_len];
    let mut out = Vec::with_capacity(r.len() + edit.positions.len() * edit.span_len);
    let mut pos = edit.positions.iter().peekable();
    for p in 0..=r.len() {
        if p > 0 {
            out.push(r[p - 1].clone());
        }
        if pos.next_if_eq(&&p).is_some() {
            out.extend_from_slice(span);
        }
    }
    out
}

/// Duplicates a random span of `r` at up to `n_rep` random positions.
pub fn make_repeat<T: Clone, R: Rng + ?Sized>(
    r: &[T],
    cfg: &RepeatConfig,
    rng: &mut R,
) -> Result<Vec<T>, NegativeError> {
    if r.is_empty() {
        return Err(NegativeError::EmptySentence);
    }
    Ok(apply_repeat(r, &sample_repeat_edit(r.len(), cfg, rng)))
}

/// Largest span `make_drop` may delete from a sentence of length `n`.
pub fn effective_drop_span(n: usize, cfg: &DropConfig) -> usize {
    let m = if n > 2 && n < cfg.m_drop { n } else { cfg.m_drop };
    m.min(n)
}

/// `None` for single-token sentences, which always become `[eos]`.
pub fn sample_drop_edit<R: Rng + ?Sized>(n: usize, cfg: &DropConfig, rng: &mut R) -> Option<DropEdit> {
    if n <= 1 {
        return None;
    }
    let span_len = rng.gen_range(1..=effective_drop_span(n, cfg));
    let start = rng.gen_range(1..=n - span_len + 1);
    Some(DropEdit { span_len, start })
}

pub fn apply_drop<T: Clone>(r: &[T], edit: Option<DropEdit>, eos: T) -> Vec<T> {
    let Some(edit) = edit else {
        return vec![eos];
    };
    let mut out: Vec<T> = r[..edit.start - 1].to_vec();
    out.extend_from_slice(&r[edit.start - 1 + edit.span_len..]);
    if out.is_empty() {
        out.push(eos);
    }
    out
}

/// Deletes one random contiguous span of `r`. A result that would be empty
/// is replaced by `[eos]`.
pub fn make_drop<T: Clone, R: Rng + ?Sized>(
    r: &[T],
    eos: T,
    cfg: &DropConfig,
    rng: &mut R,
) -> Result<Vec<T>, NegativeError> {
    if r.is_empty() {
        return Err(NegativeError::EmptySentence);
    }
    Ok(apply_drop(r, sample_drop_edit(r.len(), cfg, rng), eos))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    Repeat,
    Drop,
}

impl ErrorType {
    pub fn label(self) -> &'static str {
        match self {
            ErrorType::Repeat => "REP",
            ErrorType::Drop => "DROP",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorType::Repeat => "repeat",
            ErrorType::Drop => "drop",
        })
    }
}

impl FromStr for ErrorType {
    type Err = NegativeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "repeat" | "rep" => Ok(ErrorType::Repeat),
            "drop" => Ok(ErrorType::Drop),
            other => Err(NegativeError::UnknownType(other.to_string())),
        }
    }
}

/// An error-generating function over token ids.
pub trait ErrorGenerator: Sync {
    fn corrupt(&self, r: &[TokenId], rng: &mut dyn rand::RngCore) -> Result<Vec<TokenId>, NegativeError>;
}

/// The two built-in corruptions with their configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrupter {
    pub kind: ErrorType,
    #[serde(default)]
    pub repeat: RepeatConfig,
    #[serde(default)]
    pub drop: DropConfig,
}

impl Corrupter {
    pub fn new(kind: ErrorType) -> Self {
        Corrupter {
            kind,
            repeat: RepeatConfig::default(),
            drop: DropConfig::default(),
        }
    }

    pub fn apply<T: Clone, R: Rng + ?Sized>(&self, r: &[T], eos: T, rng: &mut R) -> Result<Vec<T>, NegativeError> {
        match self.kind {
            ErrorType::Repeat => make_repeat(r, &self.repeat, rng),
            ErrorType::Drop => make_drop(r, eos, &self.drop, rng),
        }
    }
}

impl ErrorGenerator for Corrupter {
    fn corrupt(&self, r: &[TokenId], mut rng: &mut dyn rand::RngCore) -> Result<Vec<TokenId>, NegativeError> {
        self.apply(r, EOS, &mut rng)
    }
}
