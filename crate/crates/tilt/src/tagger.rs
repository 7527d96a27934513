//! Per-token UPOS classifier: one linear layer over frozen encoder outputs.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tiltlab_core::corpusio::{Treebank, TreebankSentence};
use tiltlab_neural::{linear, xavier_uniform, AdamWConfig, Encoder, Graph, ParamId, ParamStore, Reduction, SeqLayout, Tensor, Var};

use crate::batch::sequential;
use crate::features::{FeatureConfig, Featurizer, Lexicon};
use crate::parser::{argmax, downstream_optimizer, fit};
use crate::transfer::{encoder_digest, frozen_encoder, EncoderSource};
use crate::{Result, TiltError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub features: FeatureConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            epochs: 10,
            batch_size: 32,
            lr: 2e-3,
            optimizer: downstream_optimizer(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaggingScores {
    pub accuracy: f64,
    pub tokens: usize,
}

/// Accuracy on `dev` of always predicting the most frequent training tag
/// (ties go to the alphabetically first tag).
pub fn majority_baseline(train: &Treebank, dev: &Treebank) -> TaggingScores {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in train.sentences.iter().flat_map(|s| &s.upos) {
        *counts.entry(t).or_default() += 1;
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(t, _)| *t);
    let tokens: usize = dev.sentences.iter().map(TreebankSentence::len).sum();
    let hits = dev
        .sentences
        .iter()
        .flat_map(|s| &s.upos)
        .filter(|t| Some(t.as_str()) == best)
        .count();
    TaggingScores {
        accuracy: if tokens == 0 { 0.0 } else { hits as f64 / tokens as f64 },
        tokens,
    }
}

#[derive(Debug, Clone)]
pub struct TaggerModel {
    pub lexicon: Lexicon,
    features: Featurizer,
    encoder: Encoder,
    out: (ParamId, ParamId),
}

pub struct Tagger {
    pub model: TaggerModel,
    pub store: ParamStore<f32>,
}

impl TaggerModel {
    fn new(source: &EncoderSource, train: &Treebank, config: &TaggerConfig) -> Result<(Self, ParamStore<f32>)> {
        let lexicon = Lexicon::from_treebank(train, config.features.word_cap)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = frozen_encoder(source, &mut store, &mut rng)?;
        let d = encoder.config().model_size;
        let features = Featurizer::new(config.features, &lexicon, d, &mut store, &mut rng);
        let out = (
            store.add("tagger.weight", xavier_uniform(d, lexicon.tags.len(), &mut rng)),
            store.add("tagger.bias", Tensor::zeros(1, lexicon.tags.len())),
        );
        Ok((
            Self {
                lexicon,
                features,
                encoder,
                out,
            },
            store,
        ))
    }

    /// Tag scores `[valid tokens, tags]` in sentence order.
    fn scores(
        &self,
        s: &ParamStore<f32>,
        g: &mut Graph<f32>,
        sentences: &[&TreebankSentence],
        layout: &SeqLayout,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let x = self.features.forward(g, s, &self.lexicon, sentences, layout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore));
        let h = self.encoder.forward(g, s, x, layout, false, rng)?;
        let valid = g.gather_rows(h, &layout.valid_rows());
        Ok(linear(g, s, valid, self.out.0, self.out.1))
    }

    fn loss(&self, s: &ParamStore<f32>, g: &mut Graph<f32>, sentences: &[&TreebankSentence], rng: &mut dyn RngCore) -> Result<Var> {
        let layout = SeqLayout::new(sentences.iter().map(|s| s.len()).collect());
        let logits = self.scores(s, g, sentences, &layout, Some(rng))?;
        let targets: Vec<Option<usize>> = sentences
            .iter()
            .flat_map(|s| &s.upos)
            .map(|t| Some(self.lexicon.tag(t).expect("checked tag")))
            .collect();
        Ok(g.cross_entropy(logits, &targets, Reduction::Mean))
    }

    pub fn tag(&self, s: &ParamStore<f32>, sentences: &[&TreebankSentence]) -> Result<Vec<Vec<usize>>> {
        let layout = SeqLayout::new(sentences.iter().map(|s| s.len()).collect());
        let mut g = Graph::new();
        let logits = self.scores(s, &mut g, sentences, &layout, None)?;
        let v = g.value(logits);
        let mut k = 0;
        Ok(sentences
            .iter()
            .map(|sent| {
                (0..sent.len())
                    .map(|_| {
                        k += 1;
                        argmax(v.row(k - 1))
                    })
                    .collect()
            })
            .collect())
    }

    pub fn evaluate(&self, s: &ParamStore<f32>, treebank: &Treebank) -> Result<TaggingScores> {
        let (mut hits, mut tokens) = (0, 0);
        for idx in sequential(treebank.len(), 64) {
            let batch: Vec<&TreebankSentence> = idx.iter().map(|&i| &treebank.sentences[i]).collect();
            for (sent, tags) in batch.iter().zip(self.tag(s, &batch)?) {
                for (gold, pred) in sent.upos.iter().zip(tags) {
                    tokens += 1;
                    hits += usize::from(self.lexicon.tag(gold) == Some(pred));
                }
            }
        }
        Ok(TaggingScores {
            accuracy: if tokens == 0 { 0.0 } else { hits as f64 / tokens as f64 },
            tokens,
        })
    }
}

impl Tagger {
    pub fn evaluate(&self, treebank: &Treebank) -> Result<TaggingScores> {
        self.model.evaluate(&self.store, treebank)
    }
}

pub struct TaggerOutcome {
    pub tagger: Tagger,
    pub dev: TaggingScores,
    pub losses: Vec<f32>,
    pub encoder_sha256: String,
}

pub fn train_pos(source: &EncoderSource, train: &Treebank, dev: &Treebank, config: &TaggerConfig) -> Result<TaggerOutcome> {
    let (model, mut store) = TaggerModel::new(source, train, config)?;
    model.lexicon.check(train)?;
    model.lexicon.check(dev)?;
    let before = encoder_digest(&store);
    let losses = fit(&mut store, train, config.epochs, config.batch_size, config.lr, config.optimizer, config.seed, |g, s, batch, rng| {
        model.loss(s, g, batch, rng)
    })?;
    if encoder_digest(&store) != before {
        return Err(TiltError::FrozenViolation);
    }
    let tagger = Tagger { model, store };
    let dev = tagger.evaluate(dev)?;
    Ok(TaggerOutcome {
        tagger,
        dev,
        losses,
        encoder_sha256: before,
    })
}
