use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use errsup::corpus::{build_vocabulary, load_corpus, ParallelCorpus, Vocabulary};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Git-style object hash of a byte string: SHA-256 over `blob <len>\0`
/// followed by the content.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(blob_hash(&bytes))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Held for the lifetime of a command; removed on drop.
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(dir: &Path) -> Result<Lock> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("experiment directory {} is locked by another process ({})", dir.display(), path.display())
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_hash: String,
    pub seed: u64,
    /// Input path (relative to the experiment directory when inside it)
    /// to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub args: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub commands: BTreeMap<String, ManifestEntry>,
}

/// One experiment directory.
pub struct Experiment {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    _lock: Lock,
}

impl Experiment {
    pub fn open(root: &Path, config: ExperimentConfig) -> Result<Experiment> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let lock = Lock::acquire(root)?;
        for sub in ["data", "models", "logs", "decode", "scores"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Experiment {
            root: root.to_path_buf(),
            config,
            _lock: lock,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .map(|r| r.display().to_string())
            .unwrap_or_else(|_| p.display().to_string())
    }

    /// Records one command run. Inputs and outputs are hashed now.
    pub fn record(&self, command: &str, inputs: &[PathBuf], outputs: &[PathBuf], args: Value) -> Result<()> {
        let manifest_path = self.path("manifest.json");
        let mut manifest: Manifest = if manifest_path.exists() {
            serde_json::from_str(&fs::read_to_string(&manifest_path)?)?
        } else {
            Manifest::default()
        };
        let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths.iter().map(|p| Ok((self.display_path(p), file_hash(p)?))).collect()
        };
        let entry = ManifestEntry {
            config_hash: config_hash(&self.config),
            seed: self.config.seed,
            inputs: hashes(inputs)?,
            outputs: hashes(outputs)?,
            args,
        };
        manifest.commands.insert(command.to_string(), entry);
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn split_paths(&self, split: &str) -> (PathBuf, PathBuf, PathBuf) {
        (
            self.path(&format!("data/{split}.src")),
            self.path(&format!("data/{split}.tgt")),
            self.path(&format!("data/{split}.align")),
        )
    }

    pub fn vocab_paths(&self) -> (PathBuf, PathBuf) {
        (self.path("data/src.vocab.json"), self.path("data/tgt.vocab.json"))
    }

    /// Source and target vocabularies, built from the training split and
    /// saved on first use.
    pub fn vocabularies(&self) -> Result<(Vocabulary, Vocabulary)> {
        let (sp, tp) = self.vocab_paths();
        if sp.exists() && tp.exists() {
            let read = |p: &Path| -> Result<Vocabulary> { Ok(serde_json::from_str(&fs::read_to_string(p)?)?) };
            return Ok((read(&sp)?, read(&tp)?));
        }
        let (src, tgt, _) = self.split_paths("train");
        require(&src)?;
        require(&tgt)?;
        let text = load_corpus(&src, &tgt, None)?;
        let sources: Vec<Vec<String>> = text.examples.iter().map(|e| e.source.clone()).collect();
        let targets: Vec<Vec<String>> = text.examples.iter().map(|e| e.target.clone()).collect();
        let sv = build_vocabulary(&sources, self.config.vocab_max)?;
        let tv = build_vocabulary(&targets, self.config.vocab_max)?;
        fs::write(&sp, serde_json::to_string(&sv)? + "\n")?;
        fs::write(&tp, serde_json::to_string(&tv)? + "\n")?;
        Ok((sv, tv))
    }

    /// Loads a split, with alignments when the file exists.
    pub fn corpus(&self, split: &str, sv: &Vocabulary, tv: &Vocabulary) -> Result<(ParallelCorpus, Vec<PathBuf>)> {
        let (src, tgt, align) = self.split_paths(split);
        require(&src)?;
        require(&tgt)?;
        let mut inputs = vec![src.clone(), tgt.clone()];
        let align = if align.exists() {
            inputs.push(align.clone());
            Some(align)
        } else {
            None
        };
        let text = load_corpus(&src, &tgt, align.as_deref())?;
        if text.examples.is_empty() {
            bail!("{} split is empty", split);
        }
        Ok((text.encode(sv, tv), inputs))
    }
}

pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("missing file {}", path.display());
    }
    Ok(())
}
