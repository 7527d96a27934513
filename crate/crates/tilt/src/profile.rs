//! CPU-sized experiment settings used by the trend checks.

use tiltlab_neural::{Architecture, EncoderConfig};

use crate::objective::Objective;
use crate::train::{Schedule, TrainConfig};

pub const VOCAB: usize = 2000;
pub const SENTENCES: usize = 50_000;
pub const BATCH: usize = 32;
pub const PRETRAIN_STEPS: u64 = 2000;
pub const TRANSFER_STEPS: u64 = 2000;
pub const WARMUP: u64 = 400;

pub fn encoder(architecture: Architecture) -> EncoderConfig {
    EncoderConfig::desk_transformer().with_architecture(architecture)
}

pub fn pretrain(objective: Objective, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: BATCH,
        total_steps: PRETRAIN_STEPS,
        schedule: Schedule::Noam { warmup: WARMUP },
        ..TrainConfig::paper(objective, seed)
    }
}

pub fn transfer(seed: u64) -> TrainConfig {
    TrainConfig {
        total_steps: TRANSFER_STEPS,
        ..pretrain(Objective::Clm, seed)
    }
}
