//! Graph-based dependency parser over a frozen encoder: biaffine arc
//! scores with a learned root, bilinear-plus-linear label scores.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tiltlab_core::corpusio::{Treebank, TreebankSentence};
use tiltlab_neural::{
    linear, xavier_uniform, AdamW, AdamWConfig, Encoder, Graph, ParamId, ParamStore, Reduction,
    SeqLayout, Tensor, Var,
};

use crate::batch::{sequential, Batcher};
use crate::decode::{decode, Decoder};
use crate::features::{FeatureConfig, Featurizer, Lexicon};
use crate::transfer::{encoder_digest, frozen_encoder, EncoderSource};
use crate::{Result, TiltError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub features: FeatureConfig,
    pub arc_dim: usize,
    pub label_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: AdamWConfig,
    pub decoder: Decoder,
    pub seed: u64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            arc_dim: 100,
            label_dim: 50,
            epochs: 10,
            batch_size: 32,
            lr: 2e-3,
            optimizer: downstream_optimizer(),
            decoder: Decoder::Greedy,
            seed: 0,
        }
    }
}

/// AdamW as used for every downstream head.
pub fn downstream_optimizer() -> AdamWConfig {
    AdamWConfig {
        beta1: 0.9,
        beta2: 0.9,
        eps: 1e-9,
        weight_decay: 0.0,
        clip_norm: Some(5.0),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttachmentScores {
    pub uas: f64,
    pub las: f64,
    pub tokens: usize,
}

/// Accumulates attachment counts over every word (the artificial root is
/// never scored).
#[derive(Debug, Clone, Copy, Default)]
pub struct AttachmentCounter {
    heads: usize,
    both: usize,
    tokens: usize,
}

impl AttachmentCounter {
    pub fn add(&mut self, gold_heads: &[usize], gold_labels: &[usize], heads: &[usize], labels: &[usize]) {
        for i in 0..gold_heads.len() {
            self.tokens += 1;
            if heads[i] == gold_heads[i] {
                self.heads += 1;
                if labels[i] == gold_labels[i] {
                    self.both += 1;
                }
            }
        }
    }

    pub fn scores(&self) -> AttachmentScores {
        let d = self.tokens.max(1) as f64;
        AttachmentScores {
            uas: self.heads as f64 / d,
            las: self.both as f64 / d,
            tokens: self.tokens,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Heads {
    arc_dep: (ParamId, ParamId),
    arc_head: (ParamId, ParamId),
    u_arc: ParamId,
    u_head: ParamId,
    root: ParamId,
    lab_dep: (ParamId, ParamId),
    lab_head: (ParamId, ParamId),
    u_lab: ParamId,
    root_lab: ParamId,
    w_lab: (ParamId, ParamId),
}

struct ArcGraph {
    scores: Var,
    lab_dep: Var,
    lab_head: Var,
}

/// Trained parser: architecture plus parameter values.
pub struct Parser {
    pub model: ParserModel,
    pub store: ParamStore<f32>,
}

#[derive(Debug, Clone)]
pub struct ParserModel {
    pub lexicon: Lexicon,
    features: Featurizer,
    encoder: Encoder,
    heads: Heads,
    config: ParserConfig,
}

impl Parser {
    pub fn parse(&self, sentences: &[&TreebankSentence]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        self.model.parse(&self.store, sentences)
    }

    pub fn evaluate(&self, treebank: &Treebank) -> Result<AttachmentScores> {
        self.model.evaluate(&self.store, treebank)
    }
}

impl ParserModel {
    fn new(source: &EncoderSource, train: &Treebank, config: &ParserConfig) -> Result<(Self, ParamStore<f32>)> {
        let lexicon = Lexicon::from_treebank(train, config.features.word_cap)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = frozen_encoder(source, &mut store, &mut rng)?;
        let d = encoder.config().model_size;
        let features = Featurizer::new(config.features, &lexicon, d, &mut store, &mut rng);
        let (a, l, nl) = (config.arc_dim, config.label_dim, lexicon.labels.len());
        let mut dense = |name: &str, rows: usize, cols: usize, store: &mut ParamStore<f32>| {
            (
                store.add(format!("parser.{name}.weight"), xavier_uniform(rows, cols, &mut rng)),
                store.add(format!("parser.{name}.bias"), Tensor::zeros(1, cols)),
            )
        };
        let arc_dep = dense("arc_dep", d, a, &mut store);
        let arc_head = dense("arc_head", d, a, &mut store);
        let lab_dep = dense("lab_dep", d, l, &mut store);
        let lab_head = dense("lab_head", d, l, &mut store);
        let w_lab = dense("label", 2 * l, nl, &mut store);
        let heads = Heads {
            arc_dep,
            arc_head,
            lab_dep,
            lab_head,
            w_lab,
            u_arc: store.add("parser.arc.u", Tensor::zeros(a, a)),
            u_head: store.add("parser.arc.u_head", Tensor::zeros(a, 1)),
            root: store.add("parser.arc.root", Tensor::zeros(1, a + 1)),
            u_lab: store.add("parser.label.u", Tensor::zeros(l, nl * l)),
            root_lab: store.add("parser.label.root", Tensor::zeros(1, l)),
        };
        let model = Self {
            lexicon,
            features,
            encoder,
            heads,
            config: config.clone(),
        };
        Ok((model, store))
    }

    fn arc_graph(
        &self,
        s: &ParamStore<f32>,
        g: &mut Graph<f32>,
        sentences: &[&TreebankSentence],
        layout: &SeqLayout,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<ArcGraph> {
        let h = &self.heads;
        let x = self.features.forward(g, s, &self.lexicon, sentences, layout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore));
        let enc = self.encoder.forward(g, s, x, layout, false, rng)?;
        let mlp = |g: &mut Graph<f32>, (w, b): (ParamId, ParamId)| {
            let y = linear(g, s, enc, w, b);
            g.relu(y)
        };
        let dep = mlp(g, h.arc_dep);
        let head = mlp(g, h.arc_head);
        let u = g.param(s, h.u_arc);
        let dep_u = g.matmul(dep, u);
        let ones = g.input(Tensor::from_fn(layout.rows(), 1, |_, _| 1.0));
        let dep2 = g.concat_cols(dep_u, ones);
        let uh = g.param(s, h.u_head);
        let head_u = g.matmul(head, uh);
        let head2 = g.concat_cols(head, head_u);
        let root = g.param(s, h.root);
        let scores = g.arc_scores(dep2, head2, root, layout);
        Ok(ArcGraph {
            scores,
            lab_dep: mlp(g, h.lab_dep),
            lab_head: mlp(g, h.lab_head),
        })
    }

    /// Label scores `[rows.len(), labels]` for dependents `rows` attached to
    /// `heads` (0 = root, otherwise 1-based within the sentence).
    fn label_scores(&self, s: &ParamStore<f32>, g: &mut Graph<f32>, arcs: &ArcGraph, layout: &SeqLayout, rows: &[(usize, usize)], heads: &[usize]) -> Var {
        let h = &self.heads;
        let dep_rows: Vec<usize> = rows.iter().map(|&(b, t)| layout.row(b, t)).collect();
        let head_rows: Vec<usize> = rows
            .iter()
            .zip(heads)
            .map(|(&(b, _), &hd)| if hd == 0 { 0 } else { 1 + layout.row(b, hd - 1) })
            .collect();
        let dsel = g.gather_rows(arcs.lab_dep, &dep_rows);
        let root = g.param(s, h.root_lab);
        let table = g.concat_rows(root, arcs.lab_head);
        let hsel = g.gather_rows(table, &head_rows);
        let u = g.param(s, h.u_lab);
        let du = g.matmul(dsel, u);
        let bilinear = g.row_block_dot(du, hsel);
        let both = g.concat_cols(dsel, hsel);
        let lin = linear(g, s, both, h.w_lab.0, h.w_lab.1);
        g.add(bilinear, lin)
    }

    fn loss(&self, s: &ParamStore<f32>, g: &mut Graph<f32>, sentences: &[&TreebankSentence], rng: &mut dyn RngCore) -> Result<Var> {
        let layout = SeqLayout::new(sentences.iter().map(|s| s.len()).collect());
        let arcs = self.arc_graph(s, g, sentences, &layout, Some(rng))?;
        let mut arc_targets = vec![None; layout.rows()];
        let mut rows = Vec::new();
        let mut heads = Vec::new();
        let mut labels = Vec::new();
        for (b, s) in sentences.iter().enumerate() {
            for t in 0..s.len() {
                arc_targets[layout.row(b, t)] = Some(s.heads[t]);
                rows.push((b, t));
                heads.push(s.heads[t]);
                labels.push(Some(self.lexicon.label(&s.deprels[t]).expect("checked label")));
            }
        }
        let arc_loss = g.cross_entropy(arcs.scores, &arc_targets, Reduction::Mean);
        let lab = self.label_scores(s, g, &arcs, &layout, &rows, &heads);
        let lab_loss = g.cross_entropy(lab, &labels, Reduction::Mean);
        Ok(g.add(arc_loss, lab_loss))
    }

    /// Predicted (heads, label ids) per sentence.
    pub fn parse(&self, s: &ParamStore<f32>, sentences: &[&TreebankSentence]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let layout = SeqLayout::new(sentences.iter().map(|s| s.len()).collect());
        let mut g = Graph::new();
        let arcs = self.arc_graph(s, &mut g, sentences, &layout, None)?;
        let sc = g.value(arcs.scores).clone();
        let mut rows = Vec::new();
        let mut all_heads = Vec::new();
        let mut per_sentence = Vec::new();
        for (b, s) in sentences.iter().enumerate() {
            let n = s.len();
            let m: Vec<Vec<f64>> = (0..n)
                .map(|i| sc.row(layout.row(b, i))[..=n].iter().map(|&x| x as f64).collect())
                .collect();
            let heads = decode(&m, self.config.decoder);
            rows.extend((0..n).map(|t| (b, t)));
            all_heads.extend_from_slice(&heads);
            per_sentence.push(heads);
        }
        let lab = self.label_scores(s, &mut g, &arcs, &layout, &rows, &all_heads);
        let lv = g.value(lab);
        let mut k = 0;
        Ok(per_sentence
            .into_iter()
            .map(|heads| {
                let labels = (0..heads.len())
                    .map(|_| {
                        let row = lv.row(k);
                        k += 1;
                        argmax(row)
                    })
                    .collect();
                (heads, labels)
            })
            .collect())
    }

    pub fn evaluate(&self, s: &ParamStore<f32>, treebank: &Treebank) -> Result<AttachmentScores> {
        let mut counter = AttachmentCounter::default();
        for idx in sequential(treebank.len(), 64) {
            let batch: Vec<&TreebankSentence> = idx.iter().map(|&i| &treebank.sentences[i]).collect();
            for (sent, (heads, labels)) in batch.iter().zip(self.parse(s, &batch)?) {
                let gold: Vec<usize> = sent
                    .deprels
                    .iter()
                    .map(|l| self.lexicon.label(l).unwrap_or(usize::MAX))
                    .collect();
                counter.add(&sent.heads, &gold, &heads, &labels);
            }
        }
        Ok(counter.scores())
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    (0..row.len())
        .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
        .expect("non-empty row")
}

pub struct ParserOutcome {
    pub parser: Parser,
    pub dev: AttachmentScores,
    pub losses: Vec<f32>,
    pub encoder_sha256: String,
}

/// Trains the input layer and scorers over the frozen source encoder and
/// evaluates attachment scores on `dev`.
pub fn train_parser(source: &EncoderSource, train: &Treebank, dev: &Treebank, config: &ParserConfig) -> Result<ParserOutcome> {
    let (model, mut store) = ParserModel::new(source, train, config)?;
    model.lexicon.check(train)?;
    model.lexicon.check(dev)?;
    let before = encoder_digest(&store);
    let losses = fit(&mut store, train, config.epochs, config.batch_size, config.lr, config.optimizer, config.seed, |g, s, batch, rng| {
        model.loss(s, g, batch, rng)
    })?;
    if encoder_digest(&store) != before {
        return Err(TiltError::FrozenViolation);
    }
    let parser = Parser { model, store };
    let dev = parser.evaluate(dev)?;
    Ok(ParserOutcome {
        dev,
        losses,
        encoder_sha256: before,
        parser,
    })
}

/// Epoch loop shared by the downstream tasks: seeded shuffled batches,
/// AdamW at a constant rate, one loss value per step.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit(
    store: &mut ParamStore<f32>,
    train: &Treebank,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    optimizer: AdamWConfig,
    seed: u64,
    mut loss: impl FnMut(&mut Graph<f32>, &ParamStore<f32>, &[&TreebankSentence], &mut dyn RngCore) -> Result<Var>,
) -> Result<Vec<f32>> {
    let lengths = train.sentences.iter().map(TreebankSentence::len).collect();
    let mut batcher = Batcher::new(lengths, batch_size, 1, seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    let steps_per_epoch = train.len().div_ceil(batch_size);
    let mut opt = AdamW::new(optimizer);
    let mut losses = Vec::new();
    for step in 1..=(epochs * steps_per_epoch) as u64 {
        let Some(idx) = batcher.next_batch() else {
            return Err(TiltError::Data("no non-empty training sentence".into()));
        };
        let batch: Vec<&TreebankSentence> = idx.iter().map(|&i| &train.sentences[i]).collect();
        let mut g = Graph::new();
        let l = loss(&mut g, store, &batch, &mut noise)?;
        let value = g.value(l).item() as f64;
        if !value.is_finite() {
            return Err(TiltError::NonFiniteLoss { step, loss: value });
        }
        let grads = g.backward(l)?;
        drop(g);
        opt.step(store, &grads.params(), lr)?;
        losses.push(value as f32);
    }
    Ok(losses)
}
