//! Small reverse-mode differentiation engine over dense row-major matrices,
//! with the layers, optimizer and checkpoint format needed to train LSTM and
//! Transformer encoders on a CPU.

pub mod checkpoint;
mod fused;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use fused::arc::MASKED_SCORE;
pub use graph::{Grads, Graph, Reduction, SeqLayout, Var};
pub use layers::{
    linear, sinusoidal_table, tied_logits, Architecture, Encoder, EncoderConfig, LanguageModel,
    PositionalEncoding, EMBEDDING_NAME, ENCODER_PREFIX,
};
pub use optim::{noam_lr, AdamW, AdamWConfig, StepReport};
pub use params::{xavier_uniform, Param, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("loss must be a [1, 1] tensor, got {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("sequence of length {length} exceeds the positional horizon {horizon}")]
    SequenceTooLong { length: usize, horizon: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint payload checksum mismatch (truncated or corrupted file)")]
    ChecksumMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
