use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::IoError;

/// One annotated sentence. Vectors are parallel over word tokens; heads are
/// 1-based with 0 marking the root.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreebankSentence {
    pub forms: Vec<String>,
    pub upos: Vec<String>,
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
}

impl TreebankSentence {
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    fn validate(&self, line: usize) -> Result<(), IoError> {
        let n = self.len();
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n || h == i + 1 {
                return Err(IoError::Malformed {
                    line,
                    message: format!("word {} has invalid head {h}", i + 1),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Treebank {
    pub sentences: Vec<TreebankSentence>,
}

impl Treebank {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TreebankSentence::len).sum()
    }

    /// First `n` sentences.
    pub fn truncated(&self, n: usize) -> Treebank {
        Treebank {
            sentences: self.sentences.iter().take(n).cloned().collect(),
        }
    }
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Treebank, IoError> {
    parse_conllu(BufReader::new(File::open(path)?))
}

/// Parses CoNLL-U from a reader. Comment lines, multiword-token ranges
/// (`3-4`) and empty nodes (`5.1`) are skipped; blank lines end sentences.
pub fn parse_conllu<R: BufRead>(input: R) -> Result<Treebank, IoError> {
    let mut sentences = Vec::new();
    let mut current = TreebankSentence::default();
    let mut last_line = 0;
    for (n, line) in input.lines().enumerate() {
        let lineno = n + 1;
        last_line = lineno;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                current.validate(lineno)?;
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(IoError::Malformed {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| IoError::Malformed {
            line: lineno,
            message: format!("bad ID '{id}'"),
        })?;
        if id != current.len() + 1 {
            return Err(IoError::Malformed {
                line: lineno,
                message: format!("expected word ID {}, found {id}", current.len() + 1),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| IoError::BadHead {
            line: lineno,
            value: cols[6].to_string(),
        })?;
        current.forms.push(cols[1].to_string());
        current.upos.push(cols[3].to_string());
        current.heads.push(head);
        current.deprels.push(cols[7].to_string());
    }
    if !current.is_empty() {
        current.validate(last_line)?;
        sentences.push(current);
    }
    Ok(Treebank { sentences })
}
