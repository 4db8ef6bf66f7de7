use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Alignment, CorpusError, TextCorpus, TextExample};

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Parses one alignment line of space-separated 1-based `i-j` links.
pub fn parse_alignment(line: &str, line_no: usize) -> Result<Alignment, CorpusError> {
    line.split_whitespace()
        .map(|rec| {
            let malformed = || CorpusError::MalformedAlignment {
                line: line_no,
                record: rec.to_string(),
            };
            let (a, b) = rec.split_once('-').ok_or_else(malformed)?;
            let i: usize = a.parse().map_err(|_| malformed())?;
            let j: usize = b.parse().map_err(|_| malformed())?;
            if i == 0 || j == 0 {
                return Err(malformed());
            }
            Ok((i - 1, j - 1))
        })
        .collect()
}

pub fn format_alignment(links: &[(usize, usize)]) -> String {
    let mut out = String::new();
    for (k, (i, j)) in links.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}-{}", i + 1, j + 1);
    }
    out
}

/// Reads a whitespace-tokenized parallel corpus, one sentence per line.
pub fn load_corpus(
    source_path: &Path,
    target_path: &Path,
    alignment_path: Option<&Path>,
) -> Result<TextCorpus, CorpusError> {
    let src = read_lines(source_path)?;
    let tgt = read_lines(target_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::LineCountMismatch {
            source_lines: src.len(),
            target_lines: tgt.len(),
        });
    }
    let aligns = match alignment_path {
        Some(p) => {
            let lines = read_lines(p)?;
            if lines.len() != src.len() {
                return Err(CorpusError::AlignmentLineCount {
                    expected: src.len(),
                    found: lines.len(),
                });
            }
            Some(lines)
        }
        None => None,
    };
    let mut examples = Vec::with_capacity(src.len());
    for (k, (s, t)) in src.iter().zip(&tgt).enumerate() {
        let source = tokenize(s);
        let target = tokenize(t);
        let alignment = match &aligns {
            Some(lines) => {
                let links = parse_alignment(&lines[k], k + 1)?;
                if let Some(&link) = links
                    .iter()
                    .find(|(i, j)| *i >= source.len() || *j >= target.len())
                {
                    return Err(CorpusError::AlignmentOutOfRange {
                        line: k + 1,
                        link: (link.0 + 1, link.1 + 1),
                    });
                }
                Some(links)
            }
            None => None,
        };
        examples.push(TextExample {
            source,
            target,
            alignment,
        });
    }
    Ok(TextCorpus { examples })
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the corpus; the alignment file is written only when every example
/// carries an alignment and a path is given.
pub fn save_corpus(
    corpus: &TextCorpus,
    source_path: &Path,
    target_path: &Path,
    alignment_path: Option<&Path>,
) -> Result<(), CorpusError> {
    let src: Vec<String> = corpus.examples.iter().map(|e| e.source.join(" ")).collect();
    let tgt: Vec<String> = corpus.examples.iter().map(|e| e.target.join(" ")).collect();
    write_lines(source_path, &src)?;
    write_lines(target_path, &tgt)?;
    if let Some(p) = alignment_path {
        let lines: Vec<String> = corpus
            .examples
            .iter()
            .map(|e| e.alignment.as_deref().map(format_alignment).unwrap_or_default())
            .collect();
        write_lines(p, &lines)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SyntheticTask, SyntheticTaskSpec};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let task = SyntheticTask::new(SyntheticTaskSpec::random(8, 1, 6, 0.4, 3)).unwrap();
        let corpus = task.generate(50).to_text(&task.source_vocab, &task.target_vocab);
        let (s, t, a) = (
            dir.path().join("x.src"),
            dir.path().join("x.tgt"),
            dir.path().join("x.align"),
        );
        save_corpus(&corpus, &s, &t, Some(&a)).unwrap();
        let back = load_corpus(&s, &t, Some(&a)).unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn mismatched_lines() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        fs::write(&s, "a b\nc\n").unwrap();
        fs::write(&t, "a b\n").unwrap();
        assert!(matches!(
            load_corpus(&s, &t, None),
            Err(CorpusError::LineCountMismatch { .. })
        ));
    }

    #[test]
    fn trailing_newline_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        fs::write(p("s1"), "a b\nc").unwrap();
        fs::write(p("t1"), "x\ny z").unwrap();
        fs::write(p("s2"), "a b\nc\n").unwrap();
        fs::write(p("t2"), "x\ny z\n").unwrap();
        let c1 = load_corpus(&p("s1"), &p("t1"), None).unwrap();
        let c2 = load_corpus(&p("s2"), &p("t2"), None).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.len(), 2);
    }

    #[test]
    fn malformed_alignment() {
        assert!(parse_alignment("1-1 2x3", 4).is_err());
        assert!(parse_alignment("0-1", 1).is_err());
        assert_eq!(parse_alignment("1-2 3-1", 1).unwrap(), vec![(0, 1), (2, 0)]);
        assert_eq!(parse_alignment("", 1).unwrap(), vec![]);

        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        fs::write(p("s"), "a b\n").unwrap();
        fs::write(p("t"), "x\n").unwrap();
        fs::write(p("a"), "1-1 3-1\n").unwrap();
        assert!(matches!(
            load_corpus(&p("s"), &p("t"), Some(&p("a"))),
            Err(CorpusError::AlignmentOutOfRange { .. })
        ));
    }
}
