use log::debug;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tiltlab_neural::{
    noam_lr, AdamW, AdamWConfig, Checkpoint, EncoderConfig, Graph, LanguageModel, ParamStore,
    Reduction, Var,
};

use crate::batch::{sequential, Batch, Batcher};
use crate::corpus::TokenCorpus;
use crate::objective::{clm_targets, mlm_mask, MlmConfig, Objective};
use crate::{Result, TiltError};

/// Stream offset separating corruption/dropout draws from batch order.
const NOISE_STREAM: u64 = 0x5eed_0f_d407;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Noam { warmup: u64 },
    Constant { lr: f64 },
}

impl Schedule {
    pub fn lr(&self, step: u64, model_size: usize) -> f64 {
        match *self {
            Schedule::Noam { warmup } => noam_lr(step, model_size, warmup),
            Schedule::Constant { lr } => lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub batch_size: usize,
    pub total_steps: u64,
    pub schedule: Schedule,
    pub optimizer: AdamWConfig,
    pub mlm: MlmConfig,
    pub seed: u64,
    /// Every reduction here runs in a fixed order, so runs are always
    /// bit-reproducible; the flag is recorded in run manifests.
    pub deterministic: bool,
}

impl TrainConfig {
    /// Batch 128, 10k steps, Noam warmup 4000.
    pub fn paper(objective: Objective, seed: u64) -> Self {
        Self {
            objective,
            batch_size: 128,
            total_steps: 10_000,
            schedule: Schedule::Noam { warmup: 4000 },
            optimizer: AdamWConfig::default(),
            mlm: MlmConfig::default(),
            seed,
            deterministic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(TiltError::Config("batch_size and total_steps must be positive".into()));
        }
        if let Schedule::Noam { warmup: 0 } = self.schedule {
            return Err(TiltError::Config("Noam warmup must be positive".into()));
        }
        self.mlm.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean loss of every optimizer step.
    pub losses: Vec<f32>,
    pub epochs: usize,
    pub target_tokens: usize,
}

impl TrainLog {
    /// Mean of the last `n` step losses.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        tail.iter().map(|&x| x as f64).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Cross-entropy of a language model on the scored rows of one batch, or
/// `None` when no row carries a target.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lm_loss(
    model: &LanguageModel,
    g: &mut Graph<f32>,
    store: &ParamStore<f32>,
    batch: &Batch,
    ids: &[usize],
    targets: &[Option<usize>],
    causal: bool,
    rng: Option<&mut dyn RngCore>,
    reduction: Reduction,
) -> Result<Option<(Var, usize)>> {
    let rows: Vec<usize> = (0..targets.len()).filter(|&r| targets[r].is_some()).collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let hidden = model.hidden(g, store, ids, &batch.layout, causal, rng)?;
    let logits = model.logits(g, store, hidden, &rows)?;
    let picked: Vec<Option<usize>> = rows.iter().map(|&r| targets[r]).collect();
    Ok(Some((g.cross_entropy(logits, &picked, reduction), rows.len())))
}

/// Optimizes every unfrozen parameter of `model` on `corpus`.
pub(crate) fn train_lm(
    model: &LanguageModel,
    store: &mut ParamStore<f32>,
    corpus: &TokenCorpus,
    config: &TrainConfig,
    causal: bool,
) -> Result<TrainLog> {
    config.validate()?;
    let min_len = if config.objective == Objective::Clm { 2 } else { 1 };
    let lengths = corpus.sentences.iter().map(Vec::len).collect();
    let mut batcher = Batcher::new(lengths, config.batch_size, min_len, config.seed);
    if batcher.is_empty() {
        return Err(TiltError::Data(format!("no sentence of length >= {min_len} to train on")));
    }
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    noise.set_stream(NOISE_STREAM);
    let mut opt = AdamW::new(config.optimizer);
    let model_size = model.encoder.config().model_size;
    let mut log = TrainLog::default();
    let mut step = 0u64;
    while step < config.total_steps {
        let indices = batcher.next_batch().expect("batcher is non-empty");
        let batch = Batch::select(&corpus.sentences, &indices, corpus.pad());
        let (ids, targets) = match config.objective {
            Objective::Clm => (batch.ids.clone(), clm_targets(&batch.ids, &batch.layout)),
            Objective::Mlm => {
                let m = mlm_mask(&batch.ids, &batch.layout, &config.mlm, corpus.content, corpus.mask(), &mut noise);
                (m.ids, m.targets)
            }
        };
        let mut g = Graph::new();
        let Some((loss, count)) = lm_loss(
            model,
            &mut g,
            store,
            &batch,
            &ids,
            &targets,
            causal,
            Some(&mut noise),
            Reduction::Mean,
        )?
        else {
            continue;
        };
        step += 1;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(TiltError::NonFiniteLoss { step, loss: value });
        }
        let grads = g.backward(loss)?;
        drop(g);
        opt.step(store, &grads.params(), config.schedule.lr(step, model_size))?;
        log.losses.push(value as f32);
        log.target_tokens += count;
        if step % 100 == 0 {
            debug!("step {step}: loss {:.4} (last 100: {:.4})", value, log.tail_mean(100));
        }
    }
    log.epochs = batcher.epochs();
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// Trains a freshly initialized language model on `corpus` and packages it
/// as a checkpoint. Encoder and embedding initialization follow the seed.
pub fn pretrain(encoder: &EncoderConfig, corpus: &TokenCorpus, config: &TrainConfig) -> Result<PretrainOutcome> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(config.seed);
    let model = LanguageModel::new(encoder, corpus.total_ids(), &mut store, &mut init)?
        .with_output_classes(corpus.classes());
    let log = train_lm(&model, &mut store, corpus, config, config.objective.causal())?;
    let meta = serde_json::json!({
        "objective": config.objective,
        "content_tokens": corpus.content,
        "steps": config.total_steps,
        "seed": config.seed,
        "final_loss": log.tail_mean(50),
    });
    Ok(PretrainOutcome {
        checkpoint: Checkpoint {
            config: encoder.clone(),
            meta,
            params: store,
        },
        log,
    })
}

/// `exp` of the mean next-token NLL over every scored token of `corpus`.
pub fn eval_perplexity(
    model: &LanguageModel,
    store: &ParamStore<f32>,
    corpus: &TokenCorpus,
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for indices in sequential(corpus.len(), batch_size) {
        let batch = Batch::select(&corpus.sentences, &indices, corpus.pad());
        let targets = clm_targets(&batch.ids, &batch.layout);
        let mut g = Graph::new();
        if let Some((loss, n)) = lm_loss(model, &mut g, store, &batch, &batch.ids, &targets, true, None, Reduction::Sum)? {
            total += g.value(loss).item() as f64;
            count += n;
        }
    }
    if count == 0 {
        return Err(TiltError::Data("no scorable tokens in the evaluation corpus".into()));
    }
    Ok((total / count as f64).exp())
}
