//! Context-recovery probes: linear classifiers over a frozen encoder's
//! output at a target token, one per relative position.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tiltlab_neural::{
    linear, xavier_uniform, AdamW, AdamWConfig, Encoder, Graph, ParamId, ParamStore, Reduction, Tensor, Var,
};

use crate::batch::{sequential, Batch, Batcher};
use crate::objective::Objective;
use crate::transfer::{encoder_digest, frozen_encoder, EncoderSource};
use crate::{Result, TiltError};

pub const PROBE_VOCAB: usize = 100;
pub const MIN_LEN: usize = 15;
pub const MAX_LEN: usize = 25;
pub const TRAIN_SIZE: usize = 90_000;
pub const VALID_SIZE: usize = 5_000;
pub const TEST_SIZE: usize = 5_000;
/// Shortest sequence whose middle token has six words on either side.
pub const MIN_MIDDLE_LEN: usize = 13;
const PAD: usize = PROBE_VOCAB;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub train: Vec<Vec<u32>>,
    pub valid: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
}

impl ProbeDataset {
    /// 90k/5k/5k sequences of i.i.d. uniform tokens from 100 ids, lengths
    /// uniform on 15..=25.
    pub fn generate(seed: u64) -> Self {
        Self::generate_sized(seed, TRAIN_SIZE, VALID_SIZE, TEST_SIZE)
    }

    /// Same distribution with custom split sizes. Repeated sequences are
    /// redrawn so the splits are disjoint.
    pub fn generate_sized(seed: u64, train: usize, valid: usize, test: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut draw = |n: usize| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let len = rng.random_range(MIN_LEN..=MAX_LEN);
                let s: Vec<u32> = (0..len).map(|_| rng.random_range(0..PROBE_VOCAB as u32)).collect();
                if seen.insert(s.clone()) {
                    out.push(s);
                }
            }
            out
        };
        let train = draw(train);
        let valid = draw(valid);
        let test = draw(test);
        Self { train, valid, test }
    }
}

/// Middle token of a sequence; even lengths take the left-of-centre token.
pub fn middle_index(length: usize) -> Result<usize> {
    if length < MIN_MIDDLE_LEN {
        return Err(TiltError::Config(format!(
            "sequence of length {length} is too short for middle-token probing (minimum {MIN_MIDDLE_LEN})"
        )));
    }
    Ok((length - 1) / 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// CLM probes the last token through a causal encoder; MLM probes the
    /// middle token through a bidirectional one.
    pub mode: Objective,
    pub positions: Vec<i64>,
    pub embedding_dim: Option<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub optimizer: AdamWConfig,
    /// Training sequences scored for the reported train accuracy.
    pub train_eval_size: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn clm() -> Self {
        Self::with_mode(Objective::Clm, vec![-9, -4, -3, -2, -1, 0])
    }

    pub fn mlm() -> Self {
        Self::with_mode(Objective::Mlm, vec![-6, -3, -2, -1, 0, 1, 2, 3, 6])
    }

    pub fn for_mode(mode: Objective) -> Self {
        match mode {
            Objective::Clm => Self::clm(),
            Objective::Mlm => Self::mlm(),
        }
    }

    fn with_mode(mode: Objective, positions: Vec<i64>) -> Self {
        Self {
            mode,
            positions,
            embedding_dim: None,
            batch_size: 64,
            max_epochs: 20,
            patience: 3,
            lr: 1e-3,
            optimizer: AdamWConfig {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.01,
                clip_norm: None,
            },
            train_eval_size: 5_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TiltError::Config(m));
        if self.positions.is_empty() {
            return bad("no probe positions".into());
        }
        if self.positions.iter().collect::<HashSet<_>>().len() != self.positions.len() {
            return bad("duplicate probe positions".into());
        }
        if self.mode == Objective::Clm && self.positions.iter().any(|&p| p > 0) {
            return bad("positive positions are undefined when probing the last token of a causal encoder".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, epochs and patience must be positive".into());
        }
        Ok(())
    }

    pub fn target(&self, length: usize) -> Result<usize> {
        match self.mode {
            Objective::Clm => Ok(length - 1),
            Objective::Mlm => middle_index(length),
        }
    }

    /// Token index probed at each position for a sequence of `length`.
    fn context(&self, length: usize) -> Result<Vec<usize>> {
        let t = self.target(length)? as i64;
        self.positions
            .iter()
            .map(|&p| {
                let i = t + p;
                if i < 0 || i >= length as i64 {
                    Err(TiltError::Config(format!("offset {p} falls outside a sequence of length {length}")))
                } else {
                    Ok(i as usize)
                }
            })
            .collect()
    }
}

/// What the probes read from.
#[derive(Debug, Clone)]
pub enum ProbeEncoder {
    /// Fresh 100-row embeddings feeding a frozen encoder.
    Frozen(EncoderSource),
    /// The one-hot vector of the target token itself.
    OneHot,
    /// The same vector for every token.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub encoder_id: String,
    pub mode: Objective,
    pub positions: Vec<i64>,
    pub test_accuracy: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub valid_accuracy: f64,
    pub epochs: usize,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    encoder_id: &'a str,
    mode: &'a str,
    relative_position: i64,
    test_accuracy: f64,
}

impl ProbeResult {
    pub fn accuracy_at(&self, position: i64) -> Option<f64> {
        self.positions.iter().position(|&p| p == position).map(|i| self.test_accuracy[i])
    }

    /// Rows `(encoder_id, mode, relative_position, test_accuracy)`.
    pub fn write_csv<W: std::io::Write>(results: &[ProbeResult], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in results {
            for (&p, &a) in r.positions.iter().zip(&r.test_accuracy) {
                w.serialize(CsvRow {
                    encoder_id: &r.encoder_id,
                    mode: r.mode.name(),
                    relative_position: p,
                    test_accuracy: a,
                })
                .map_err(|e| TiltError::Data(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Probe {
    encoder: Option<(Encoder, ParamId)>,
    kind: Kind,
    heads: Vec<(ParamId, ParamId)>,
    causal: bool,
}

#[derive(Clone, Copy)]
enum Kind {
    Frozen,
    OneHot,
    Constant,
}

impl Probe {
    fn new(source: &ProbeEncoder, config: &ProbeConfig, store: &mut ParamStore<f32>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (encoder, kind, width) = match source {
            ProbeEncoder::Frozen(src) => {
                check_mode(src, config.mode)?;
                let enc = frozen_encoder(src, store, &mut rng)?;
                let d = enc.config().model_size;
                let dim = config.embedding_dim.unwrap_or(d);
                if dim != d {
                    return Err(TiltError::Config(format!("embedding width {dim} differs from encoder width {d}")));
                }
                let emb = store.add("probe.embedding", xavier_uniform(PROBE_VOCAB + 1, d, &mut rng));
                (Some((enc, emb)), Kind::Frozen, d)
            }
            ProbeEncoder::OneHot => (None, Kind::OneHot, PROBE_VOCAB),
            ProbeEncoder::Constant => (None, Kind::Constant, 1),
        };
        let heads = config
            .positions
            .iter()
            .map(|p| {
                (
                    store.add(format!("probe.head{p}.weight"), xavier_uniform(width, PROBE_VOCAB, &mut rng)),
                    store.add(format!("probe.head{p}.bias"), Tensor::zeros(1, PROBE_VOCAB)),
                )
            })
            .collect();
        Ok(Self {
            encoder,
            kind,
            heads,
            causal: config.mode.causal(),
        })
    }

    /// Target-token features `[batch, width]`.
    fn features(&self, g: &mut Graph<f32>, s: &ParamStore<f32>, batch: &Batch, targets: &[usize]) -> Result<Var> {
        let rows: Vec<usize> = targets.iter().enumerate().map(|(b, &t)| batch.layout.row(b, t)).collect();
        Ok(match self.kind {
            Kind::Frozen => {
                let (enc, emb) = self.encoder.as_ref().expect("frozen encoder");
                let e = g.param(s, *emb);
                let x = g.gather_rows(e, &batch.ids);
                let h = enc.forward(g, s, x, &batch.layout, self.causal, None)?;
                g.gather_rows(h, &rows)
            }
            Kind::OneHot => g.input(Tensor::from_fn(rows.len(), PROBE_VOCAB, |i, j| {
                f32::from(batch.ids[rows[i]] == j)
            })),
            Kind::Constant => g.input(Tensor::from_fn(rows.len(), 1, |_, _| 1.0)),
        })
    }

    fn logits(&self, g: &mut Graph<f32>, s: &ParamStore<f32>, batch: &Batch, targets: &[usize]) -> Result<Vec<Var>> {
        let f = self.features(g, s, batch, targets)?;
        Ok(self.heads.iter().map(|&(w, b)| linear(g, s, f, w, b)).collect())
    }
}

fn check_mode(source: &EncoderSource, mode: Objective) -> Result<()> {
    if let EncoderSource::Pretrained(c) = source {
        if let Some(obj) = c.meta.get("objective") {
            let trained: Objective = serde_json::from_value(obj.clone())?;
            if trained != mode {
                return Err(TiltError::Config(format!(
                    "encoder was pretrained with {} but probing runs in {} mode",
                    trained.name(),
                    mode.name()
                )));
            }
        }
    }
    Ok(())
}

struct Split<'a> {
    seqs: &'a [Vec<u32>],
    targets: Vec<usize>,
    labels: Vec<Vec<usize>>,
}

impl<'a> Split<'a> {
    fn new(seqs: &'a [Vec<u32>], config: &ProbeConfig) -> Result<Self> {
        let mut targets = Vec::with_capacity(seqs.len());
        let mut labels = Vec::with_capacity(seqs.len());
        for s in seqs {
            if let Some(&t) = s.iter().find(|&&t| t as usize >= PROBE_VOCAB) {
                return Err(TiltError::Data(format!("probe token {t} outside the vocabulary")));
            }
            targets.push(config.target(s.len())?);
            labels.push(config.context(s.len())?.into_iter().map(|i| s[i] as usize).collect());
        }
        Ok(Self { seqs, targets, labels })
    }

    fn batch(&self, idx: &[usize]) -> (Batch, Vec<usize>) {
        (Batch::select(self.seqs, idx, PAD), idx.iter().map(|&i| self.targets[i]).collect())
    }

    fn accuracy(&self, probe: &Probe, s: &ParamStore<f32>, limit: usize) -> Result<Vec<f64>> {
        let n = self.seqs.len().min(limit);
        let mut hits = vec![0usize; probe.heads.len()];
        for idx in sequential(n, 256) {
            let (batch, targets) = self.batch(&idx);
            let mut g = Graph::new();
            for (k, v) in probe.logits(&mut g, s, &batch, &targets)?.into_iter().enumerate() {
                let t = g.value(v);
                for (r, &i) in idx.iter().enumerate() {
                    hits[k] += usize::from(crate::parser::argmax(t.row(r)) == self.labels[i][k]);
                }
            }
        }
        Ok(hits.into_iter().map(|h| h as f64 / n.max(1) as f64).collect())
    }
}

/// Trains all position heads jointly with early stopping on mean
/// validation accuracy and reports accuracies of the best epoch.
pub fn train_probes(
    encoder_id: &str,
    encoder: &ProbeEncoder,
    data: &ProbeDataset,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    config.validate()?;
    if data.train.is_empty() || data.valid.is_empty() || data.test.is_empty() {
        return Err(TiltError::Data("every probe split must be non-empty".into()));
    }
    let train = Split::new(&data.train, config)?;
    let valid = Split::new(&data.valid, config)?;
    let test = Split::new(&data.test, config)?;
    let mut store = ParamStore::new();
    let probe = Probe::new(encoder, config, &mut store)?;
    let digest = encoder_digest(&store);
    let mut opt = AdamW::new(config.optimizer);
    let lengths = data.train.iter().map(Vec::len).collect();
    let mut batcher = Batcher::new(lengths, config.batch_size, 1, config.seed);
    let per_epoch = data.train.len().div_ceil(config.batch_size);
    let mut best = (f64::NEG_INFINITY, store.clone(), 0);
    let mut stale = 0;
    let mut step = 0u64;
    for epoch in 1..=config.max_epochs {
        for _ in 0..per_epoch {
            step += 1;
            let idx = batcher.next_batch().expect("non-empty training split");
            let (batch, targets) = train.batch(&idx);
            let mut g = Graph::new();
            let logits = probe.logits(&mut g, &store, &batch, &targets)?;
            let mut loss = None;
            for (k, v) in logits.into_iter().enumerate() {
                let gold: Vec<Option<usize>> = idx.iter().map(|&i| Some(train.labels[i][k])).collect();
                let l = g.cross_entropy(v, &gold, Reduction::Mean);
                loss = Some(match loss {
                    None => l,
                    Some(acc) => g.add(acc, l),
                });
            }
            let loss = loss.expect("at least one head");
            let value = g.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(TiltError::NonFiniteLoss { step, loss: value });
            }
            let grads = g.backward(loss)?;
            drop(g);
            opt.step(&mut store, &grads.params(), config.lr)?;
        }
        let acc = valid.accuracy(&probe, &store, usize::MAX)?;
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        log::info!("probe {encoder_id} epoch {epoch}: mean valid accuracy {mean:.4}");
        if mean > best.0 {
            best = (mean, store.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (valid_accuracy, store, epochs) = best;
    if encoder_digest(&store) != digest {
        return Err(TiltError::FrozenViolation);
    }
    Ok(ProbeResult {
        encoder_id: encoder_id.to_string(),
        mode: config.mode,
        positions: config.positions.clone(),
        test_accuracy: test.accuracy(&probe, &store, usize::MAX)?,
        train_accuracy: train.accuracy(&probe, &store, config.train_eval_size)?,
        valid_accuracy,
        epochs,
    })
}
