use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, ParallelCorpus, ParallelExample, Sentence, Vocabulary};

/// A deterministic token-transduction task: every source symbol is rewritten
/// to one or two target symbols, left to right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mapping: BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    /// Source symbols `s00..`, each copied to the matching `s00..`.
    pub fn identity(vocab_size: usize, min_len: usize, max_len: usize, seed: u64) -> Self {
        let mapping = (0..vocab_size)
            .map(|i| (source_symbol(i, vocab_size), vec![source_symbol(i, vocab_size)]))
            .collect();
        SyntheticTaskSpec {
            vocab_size,
            min_len,
            max_len,
            mapping,
            seed,
        }
    }

    /// A random symbol substitution where `two_fraction` of the source
    /// symbols expand to two target symbols. The mapping is drawn from
    /// `seed`; the corpus stream uses the same seed.
    pub fn random(
        vocab_size: usize,
        min_len: usize,
        max_len: usize,
        two_fraction: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7070_696e_6721);
        let mut targets: Vec<String> = (0..vocab_size).map(|i| target_symbol(i, vocab_size)).collect();
        targets.shuffle(&mut rng);
        let mapping = (0..vocab_size)
            .map(|i| {
                let mut out = vec![targets[i].clone()];
                if rng.gen::<f64>() < two_fraction {
                    out.push(targets[rng.gen_range(0..vocab_size)].clone());
                }
                (source_symbol(i, vocab_size), out)
            })
            .collect();
        SyntheticTaskSpec {
            vocab_size,
            min_len,
            max_len,
            mapping,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticTaskSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.min_len < 1 {
            return bad("min_len must be at least 1".into());
        }
        if self.max_len < self.min_len {
            return bad(format!("max_len {} < min_len {}", self.max_len, self.min_len));
        }
        if self.mapping.len() != self.vocab_size || self.vocab_size == 0 {
            return bad(format!(
                "mapping covers {} symbols but vocab_size is {}",
                self.mapping.len(),
                self.vocab_size
            ));
        }
        for (k, v) in &self.mapping {
            if v.is_empty() || v.len() > 2 {
                return bad(format!("symbol {k:?} maps to {} outputs", v.len()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let spec: SyntheticTaskSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

fn source_symbol(i: usize, n: usize) -> String {
    format!("s{:0w$}", i, w = width(n))
}

fn target_symbol(i: usize, n: usize) -> String {
    format!("t{:0w$}", i, w = width(n))
}

/// A validated spec together with its source and target vocabularies.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    alphabet: Vec<String>,
    table: Vec<Vec<u32>>,
}

impl SyntheticTask {
    pub fn new(spec: SyntheticTaskSpec) -> Result<Self, CorpusError> {
        spec.validate()?;
        let alphabet: Vec<String> = spec.mapping.keys().cloned().collect();
        let outputs: BTreeSet<&str> = spec.mapping.values().flatten().map(String::as_str).collect();
        let source_vocab = Vocabulary::from_tokens(alphabet.iter().map(String::as_str));
        let target_vocab = Vocabulary::from_tokens(outputs);
        let table = alphabet
            .iter()
            .map(|s| spec.mapping[s].iter().map(|t| target_vocab.id(t)).collect())
            .collect();
        Ok(SyntheticTask {
            spec,
            source_vocab,
            target_vocab,
            alphabet,
            table,
        })
    }

    /// Applies the mapping to a source sentence given in surface form.
    /// Returns the target and its 0-based alignment.
    pub fn transduce<S: AsRef<str>>(&self, source: &[S]) -> (Vec<String>, Vec<(usize, usize)>) {
        let mut target = Vec::new();
        let mut links = Vec::new();
        for (i, s) in source.iter().enumerate() {
            for t in &self.spec.mapping[s.as_ref()] {
                links.push((i, target.len()));
                target.push(t.clone());
            }
        }
        (target, links)
    }

    /// Draws `n_examples` pairs from the seeded stream.
    pub fn generate(&self, n_examples: usize) -> ParallelCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        let examples = (0..n_examples)
            .map(|_| {
                let len = rng.gen_range(self.spec.min_len..=self.spec.max_len);
                let symbols: Vec<usize> =
                    (0..len).map(|_| rng.gen_range(0..self.alphabet.len())).collect();
                let source: Vec<u32> = symbols
                    .iter()
                    .map(|&k| self.source_vocab.id(&self.alphabet[k]))
                    .collect();
                let mut target = Vec::new();
                let mut links = Vec::new();
                for (i, &k) in symbols.iter().enumerate() {
                    for &t in &self.table[k] {
                        links.push((i, target.len()));
                        target.push(t);
                    }
                }
                ParallelExample {
                    source: Sentence(source),
                    target: Sentence(target),
                    alignment: Some(links),
                }
            })
            .collect();
        ParallelCorpus { examples }
    }
}

pub fn generate_synthetic_corpus(
    spec: &SyntheticTaskSpec,
    n_examples: usize,
) -> Result<ParallelCorpus, CorpusError> {
    Ok(SyntheticTask::new(spec.clone())?.generate(n_examples))
}
