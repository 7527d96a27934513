//! Pretraining, frozen-encoder transfer, downstream evaluation and probing.

pub mod batch;
pub mod corpus;
pub mod decode;
pub mod features;
pub mod objective;
pub mod parser;
pub mod probe;
pub mod profile;
pub mod report;
pub mod tagger;
pub mod train;
pub mod transfer;

use thiserror::Error;

pub use corpus::TokenCorpus;
pub use objective::{clm_targets, mlm_mask, MlmConfig, Objective};
pub use train::{eval_perplexity, pretrain, Schedule, TrainConfig, TrainLog};
pub use transfer::{transfer_lm, EncoderSource, TransferOutcome};

#[derive(Debug, Error)]
pub enum TiltError {
    #[error(transparent)]
    Neural(#[from] tiltlab_neural::NeuralError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("encoder parameters changed during frozen training")]
    FrozenViolation,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TiltError {
    /// Numerical failures (as opposed to bad inputs or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TiltError::NonFiniteLoss { .. }
                | TiltError::Neural(tiltlab_neural::NeuralError::NonFiniteGradient(_))
                | TiltError::Neural(tiltlab_neural::NeuralError::NonFiniteLoss(_))
        )
    }
}

pub type Result<T, E = TiltError> = std::result::Result<T, E>;
