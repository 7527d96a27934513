use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tiltlab_neural::{Checkpoint, Encoder, EncoderConfig, LanguageModel, ParamStore, ENCODER_PREFIX};

use crate::corpus::TokenCorpus;
use crate::objective::Objective;
use crate::train::{eval_perplexity, train_lm, TrainConfig, TrainLog};
use crate::{Result, TiltError};

/// Encoder weights a transfer run starts from.
#[derive(Debug, Clone)]
pub enum EncoderSource {
    Pretrained(Checkpoint),
    /// Untrained encoder initialized from `seed`.
    RandomWeights { config: EncoderConfig, seed: u64 },
}

impl EncoderSource {
    pub fn config(&self) -> &EncoderConfig {
        match self {
            EncoderSource::Pretrained(c) => &c.config,
            EncoderSource::RandomWeights { config, .. } => config,
        }
    }

    /// Copies this source's encoder into `store`, which must already hold
    /// an encoder of the same configuration.
    pub fn install(&self, store: &mut ParamStore<f32>) -> Result<()> {
        match self {
            EncoderSource::Pretrained(c) => c.restore_into(store, ENCODER_PREFIX)?,
            EncoderSource::RandomWeights { config, seed } => {
                let mut fresh = ParamStore::new();
                Encoder::new(config, &mut fresh, &mut ChaCha8Rng::seed_from_u64(*seed))?;
                let missing = store.load_matching(&fresh, ENCODER_PREFIX);
                if !missing.is_empty() {
                    return Err(TiltError::Config(format!("encoder parameters not found: {missing:?}")));
                }
            }
        }
        Ok(())
    }
}

/// SHA-256 over the names and bytes of every encoder parameter.
pub fn encoder_digest(store: &ParamStore<f32>) -> String {
    let mut h = Sha256::new();
    for (_, p) in store.iter().filter(|(_, p)| p.name.starts_with(ENCODER_PREFIX)) {
        h.update(p.name.as_bytes());
        for x in p.value.data() {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub perplexity: f64,
    pub log: TrainLog,
    pub encoder_sha256: String,
}

/// Builds a language model for the L2 vocabulary around the source encoder:
/// fresh embeddings (tied to the output layer) from `seed`, encoder frozen.
pub fn frozen_language_model(
    source: &EncoderSource,
    corpus: &TokenCorpus,
    seed: u64,
) -> Result<(LanguageModel, ParamStore<f32>)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = LanguageModel::new(source.config(), corpus.total_ids(), &mut store, &mut rng)?
        .with_output_classes(corpus.classes());
    source.install(&mut store)?;
    store.freeze_prefix(ENCODER_PREFIX);
    Ok((model, store))
}

/// Relearns only the word embeddings on `train` with the encoder frozen and
/// reports perplexity on `eval`.
pub fn transfer_lm(
    source: &EncoderSource,
    train: &TokenCorpus,
    eval: &TokenCorpus,
    config: &TrainConfig,
) -> Result<TransferOutcome> {
    if config.objective != Objective::Clm {
        return Err(TiltError::Config("language-model transfer trains with the CLM objective".into()));
    }
    if train.content != eval.content {
        return Err(TiltError::Data("train and eval corpora use different vocabularies".into()));
    }
    let (model, mut store) = frozen_language_model(source, train, config.seed)?;
    let before = encoder_digest(&store);
    let log = train_lm(&model, &mut store, train, config, true)?;
    let after = encoder_digest(&store);
    if before != after {
        return Err(TiltError::FrozenViolation);
    }
    let perplexity = eval_perplexity(&model, &store, eval, 64)?;
    Ok(TransferOutcome {
        perplexity,
        log,
        encoder_sha256: after,
    })
}

/// Adds an encoder of the source's configuration to `store`, loads the
/// source weights into it, and freezes it.
pub fn frozen_encoder<R: rand::Rng + ?Sized>(
    source: &EncoderSource,
    store: &mut ParamStore<f32>,
    rng: &mut R,
) -> Result<Encoder> {
    let encoder = Encoder::new(source.config(), store, rng)?;
    source.install(store)?;
    store.freeze_prefix(ENCODER_PREFIX);
    Ok(encoder)
}
