//! Natural-language inputs: capped vocabularies, fitted length
//! distributions, and CoNLL-U treebanks. Text is expected pre-tokenized,
//! one sentence per line.

mod conllu;
mod vocab;

use thiserror::Error;

use crate::langgen::TokenId;

pub use conllu::{parse_conllu, read_conllu, Treebank, TreebankSentence};
pub use vocab::{build_vocab, fit_length_distribution, VocabMap, OOV_MARKER};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("token id {0} is outside the vocabulary")]
    IdOutOfRange(TokenId),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: HEAD '{value}' is not an integer")]
    BadHead { line: usize, value: String },
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
