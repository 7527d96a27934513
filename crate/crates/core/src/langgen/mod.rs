//! Artificial-language corpora.
//!
//! A language is a length distribution, a token sampler and an optional
//! head/tail pair structure. Sentences are produced one at a time from
//! per-sentence RNG streams, so a corpus is a pure function of its
//! [`GenConfig`] regardless of how many workers generate it.

mod config;
mod corpus;
mod length;
mod sampler;
mod structure;
mod vocab;

use thiserror::Error;

pub use config::{GenConfig, LANGUAGE_NAMES};
pub use corpus::{render_line, sentence_rng, Corpus, CorpusGenerator, Sentence};
pub use length::{LengthDistribution, PRETRAIN_MAX_LEN, PRETRAIN_MIN_LEN};
pub use sampler::{
    discourse_table, sample_unstructured_tokens, word_vectors, CumulativeTable, PreparedSampler,
    TokenSampler, DEFAULT_LOGLINEAR_DIM, DEFAULT_ZIPF_ALPHA,
};
pub use structure::{
    arrange_flat, arrange_nesting, pair_count_for_length, recover_roles, render_pairs,
    sample_pairs, PairRendering, PairRole, Structure, StructureSpec, DEFAULT_OPEN_THRESHOLD,
};
pub use vocab::{Rendering, TokenId, Vocabulary};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unrecognized token '{0}'")]
    Token(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
