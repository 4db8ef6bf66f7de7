//! Vocabularies, parallel corpora, synthetic transduction tasks and corpus
//! file I/O.

mod io;
mod synthetic;

use std::collections::HashMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{format_alignment, load_corpus, parse_alignment, save_corpus, write_lines};
pub use synthetic::{generate_synthetic_corpus, SyntheticTask, SyntheticTaskSpec};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 3] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary max_size must be at least 4, got {0}")]
    VocabTooSmall(usize),
    #[error("line count mismatch: {source_lines} source lines, {target_lines} target lines")]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("alignment file has {found} lines, expected {expected}")]
    AlignmentLineCount { expected: usize, found: usize },
    #[error("malformed alignment record {record:?} on line {line}")]
    MalformedAlignment { line: usize, record: String },
    #[error("alignment link {link:?} out of range on line {line}")]
    AlignmentOutOfRange { line: usize, link: (usize, usize) },
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Bidirectional token/id map. Ids 0, 1, 2 are `<s>`, `</s>`, `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens.iter().map(String::as_str))
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from a list of surface forms. Specials are always
    /// placed first; duplicates and special strings in `tokens` are skipped.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for tok in SPECIALS.into_iter().chain(tokens) {
            vocab.insert(tok);
        }
        vocab
    }

    fn insert(&mut self, tok: &str) {
        if !self.index.contains_key(tok) {
            self.index.insert(tok.to_string(), self.tokens.len() as TokenId);
            self.tokens.push(tok.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(UNK_TOKEN)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence {
        Sentence(tokens.iter().map(|t| self.id(t.as_ref())).collect())
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&id| self.token(id).to_string()).collect()
    }
}

/// Keeps the `max_size - 3` most frequent tokens, ties broken by first
/// occurrence, and prepends the specials.
pub fn build_vocabulary<S: AsRef<str>>(
    lines: &[Vec<S>],
    max_size: usize,
) -> Result<Vocabulary, CorpusError> {
    if max_size < 4 {
        return Err(CorpusError::VocabTooSmall(max_size));
    }
    // (count, first occurrence)
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut seen = 0usize;
    for tok in lines.iter().flatten() {
        let tok = tok.as_ref();
        if SPECIALS.contains(&tok) {
            continue;
        }
        let entry = stats.entry(tok).or_insert((0, seen));
        entry.0 += 1;
        seen += 1;
    }
    if stats.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize, usize)> =
        stats.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size - SPECIALS.len());
    Ok(Vocabulary::from_tokens(ranked.into_iter().map(|(t, _, _)| t)))
}

/// A sequence of token ids, without `<s>`/`</s>` framing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Sentence(pub Vec<TokenId>);

impl Sentence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for Sentence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl AsRef<[TokenId]> for Sentence {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for Sentence {
    fn from(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }
}

/// Source/target word links, 0-based internally (files use 1-based `i-j`).
pub type Alignment = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelExample {
    pub source: Sentence,
    pub target: Sentence,
    pub alignment: Option<Alignment>,
}

impl ParallelExample {
    pub fn new(source: impl Into<Sentence>, target: impl Into<Sentence>) -> Self {
        ParallelExample {
            source: source.into(),
            target: target.into(),
            alignment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub examples: Vec<ParallelExample>,
}

impl ParallelCorpus {
    pub fn new(examples: Vec<ParallelExample>) -> Self {
        ParallelCorpus { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParallelExample> {
        self.examples.iter()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.examples.iter().map(|e| e.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.examples.iter().map(|e| e.target.clone()).collect()
    }

    pub fn has_alignments(&self) -> bool {
        self.examples.iter().all(|e| e.alignment.is_some())
    }

    /// Renders the corpus as token strings.
    pub fn to_text(&self, src: &Vocabulary, tgt: &Vocabulary) -> TextCorpus {
        TextCorpus {
            examples: self
                .examples
                .iter()
                .map(|e| TextExample {
                    source: src.decode(&e.source),
                    target: tgt.decode(&e.target),
                    alignment: e.alignment.clone(),
                })
                .collect(),
        }
    }
}

/// Drops pairs with an empty side or with either side longer than `max_len`.
pub fn filter_training_pairs(corpus: &ParallelCorpus, max_len: usize) -> ParallelCorpus {
    ParallelCorpus {
        examples: corpus
            .examples
            .iter()
            .filter(|e| {
                !e.source.is_empty()
                    && !e.target.is_empty()
                    && e.source.len().max(e.target.len()) <= max_len
            })
            .cloned()
            .collect(),
    }
}

/// A parallel corpus in surface form, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextCorpus {
    pub examples: Vec<TextExample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub alignment: Option<Alignment>,
}

impl TextCorpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn encode(&self, src: &Vocabulary, tgt: &Vocabulary) -> ParallelCorpus {
        ParallelCorpus {
            examples: self
                .examples
                .iter()
                .map(|e| ParallelExample {
                    source: src.encode(&e.source),
                    target: tgt.encode(&e.target),
                    alignment: e.alignment.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lines(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn frequency_order() {
        let v = build_vocabulary(&lines(&[&["a", "b"], &["a"]]), 5).unwrap();
        assert_eq!(v.tokens(), &["<s>", "</s>", "<unk>", "a", "b"]);
        let v = build_vocabulary(&lines(&[&["x"]]), 4).unwrap();
        assert_eq!(v.tokens(), &["<s>", "</s>", "<unk>", "x"]);
    }

    #[test]
    fn ties_by_first_occurrence() {
        let v = build_vocabulary(&lines(&[&["c", "b", "a", "b", "c"]]), 5).unwrap();
        assert_eq!(&v.tokens()[3..], &["c", "b"]);
    }

    #[test]
    fn empty_and_small() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(
            build_vocabulary(&empty, 10),
            Err(CorpusError::EmptyCorpus)
        ));
        assert!(matches!(
            build_vocabulary(&lines(&[&["a"]]), 3),
            Err(CorpusError::VocabTooSmall(3))
        ));
    }

    #[test]
    fn random_lines_keep_top_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let corpus: Vec<Vec<String>> = (0..1000)
            .map(|_| {
                let n = rng.gen_range(1..12);
                (0..n)
                    .map(|_| {
                        // skewed distribution over 60 symbols
                        let k = (rng.gen::<f64>().powi(2) * 60.0) as usize;
                        format!("w{k}")
                    })
                    .collect()
            })
            .collect();
        let max_size = 23;
        let v = build_vocabulary(&corpus, max_size).unwrap();
        assert_eq!(v.len(), max_size);

        // independent count: rank by (count desc, first occurrence asc)
        let mut order: Vec<String> = Vec::new();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in corpus.iter().flatten() {
            if !counts.contains_key(t) {
                order.push(t.clone());
            }
            *counts.entry(t.clone()).or_default() += 1;
        }
        let mut ranked = order.clone();
        ranked.sort_by_key(|t| std::cmp::Reverse(counts[t]));
        for t in &ranked[..max_size - 3] {
            assert!(v.contains(t), "{t} missing");
        }
    }

    #[test]
    fn encode_decode() {
        let v = Vocabulary::from_tokens(["a", "b", "a"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<s>"), BOS);
        assert_eq!(v.id("</s>"), EOS);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.token(UNK), "<unk>");
        for t in v.tokens() {
            assert_eq!(v.token(v.id(t)), t);
        }
        let ids = v.encode(&["a", "q", "b"]);
        assert_eq!(v.decode(&ids), vec!["a", "<unk>", "b"]);
    }

    #[test]
    fn filter_rules() {
        let mk = |s: usize, t: usize| ParallelExample::new(vec![3; s], vec![3; t]);
        let c = ParallelCorpus::new(vec![mk(81, 5), mk(80, 80), mk(0, 3), mk(3, 0), mk(2, 2)]);
        let f = filter_training_pairs(&c, 80);
        assert_eq!(f.len(), 2);
        assert_eq!(f.examples[0].source.len(), 80);
        assert_eq!(filter_training_pairs(&f, 80), f);
    }

    #[test]
    fn vocabulary_serde() {
        let v = Vocabulary::from_tokens(["x", "y"]);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }
}
