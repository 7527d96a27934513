use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, SeqLayout, Var};
use crate::params::{constant, xavier_uniform, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};
use crate::NeuralError;

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Name prefix of every encoder parameter.
pub const ENCODER_PREFIX: &str = "encoder.";
pub const EMBEDDING_NAME: &str = "embedding.weight";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lstm,
    Transformer,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::Transformer => "transformer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalEncoding {
    /// Fixed sine/cosine table added to the input embeddings.
    Sinusoidal,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub architecture: Architecture,
    pub layers: usize,
    /// Width of encoder inputs and outputs (the embedding size).
    pub model_size: usize,
    /// LSTM state width; outputs are projected back to `model_size`.
    pub lstm_hidden: usize,
    pub ff_size: usize,
    pub heads: usize,
    pub dropout: f64,
    pub positional: PositionalEncoding,
    /// Longest sequence the positional encoding accepts.
    pub max_positions: usize,
}

impl EncoderConfig {
    pub fn paper_lstm() -> Self {
        Self {
            architecture: Architecture::Lstm,
            layers: 3,
            model_size: 300,
            lstm_hidden: 294,
            ff_size: 600,
            heads: 4,
            dropout: 0.1,
            positional: PositionalEncoding::Sinusoidal,
            max_positions: 512,
        }
    }

    pub fn paper_transformer() -> Self {
        Self {
            architecture: Architecture::Transformer,
            ..Self::paper_lstm()
        }
    }

    /// CPU-sized Transformer: width 64, 2 layers, 2 heads, feedforward 128.
    pub fn desk_transformer() -> Self {
        Self {
            architecture: Architecture::Transformer,
            layers: 2,
            model_size: 64,
            lstm_hidden: 62,
            ff_size: 128,
            heads: 2,
            dropout: 0.1,
            positional: PositionalEncoding::Sinusoidal,
            max_positions: 512,
        }
    }

    /// CPU-sized LSTM with the hidden width chosen to match the desk
    /// Transformer's non-embedding parameter count.
    pub fn desk_lstm() -> Self {
        Self {
            architecture: Architecture::Lstm,
            ..Self::desk_transformer()
        }
    }

    pub fn with_architecture(&self, architecture: Architecture) -> Self {
        Self {
            architecture,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::Config(m));
        if self.layers == 0 || self.model_size == 0 {
            return bad("layers and model_size must be positive".into());
        }
        match self.architecture {
            Architecture::Transformer => {
                if self.heads == 0 || self.model_size % self.heads != 0 {
                    return bad(format!("{} heads do not divide model size {}", self.heads, self.model_size));
                }
                if self.ff_size == 0 {
                    return bad("ff_size must be positive".into());
                }
            }
            Architecture::Lstm if self.lstm_hidden == 0 => {
                return bad("lstm_hidden must be positive".into());
            }
            Architecture::Lstm => {}
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Encoder parameter count, excluding embeddings and the tied output.
    pub fn non_embedding_params(&self) -> usize {
        let d = self.model_size;
        match self.architecture {
            Architecture::Transformer => {
                let attention = 4 * d * d + 4 * d;
                let ff = 2 * d * self.ff_size + self.ff_size + d;
                self.layers * (attention + ff + 4 * d)
            }
            Architecture::Lstm => {
                let h = self.lstm_hidden;
                let first = 4 * h * (d + h) + 8 * h;
                let rest = 4 * h * (2 * h) + 8 * h;
                first + (self.layers - 1) * rest + h * d + d
            }
        }
    }
}

#[derive(Debug, Clone)]
enum LayerParams {
    Transformer {
        w_qkv: ParamId,
        b_qkv: ParamId,
        w_o: ParamId,
        b_o: ParamId,
        ln1_g: ParamId,
        ln1_b: ParamId,
        w_ff1: ParamId,
        b_ff1: ParamId,
        w_ff2: ParamId,
        b_ff2: ParamId,
        ln2_g: ParamId,
        ln2_b: ParamId,
    },
    Lstm {
        w_ih: ParamId,
        b_ih: ParamId,
        w_hh: ParamId,
        b_hh: ParamId,
    },
}

/// Post-LN Transformer encoder or stacked unidirectional LSTM, mapping
/// `[N, model_size]` inputs to `[N, model_size]` outputs.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    layers: Vec<LayerParams>,
    projection: Option<(ParamId, ParamId)>,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        config: &EncoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        config.validate()?;
        let d = config.model_size;
        let mut layers = Vec::with_capacity(config.layers);
        let mut projection = None;
        for l in 0..config.layers {
            let p = |name: &str| format!("{ENCODER_PREFIX}layer{l}.{name}");
            layers.push(match config.architecture {
                Architecture::Transformer => {
                    let f = config.ff_size;
                    // q, k and v are separate Xavier blocks packed side by side
                    let (q, k, v) = (
                        xavier_uniform::<T, _>(d, d, rng),
                        xavier_uniform::<T, _>(d, d, rng),
                        xavier_uniform::<T, _>(d, d, rng),
                    );
                    let qkv = Tensor::from_fn(d, 3 * d, |i, j| match j / d {
                        0 => q.get(i, j),
                        1 => k.get(i, j - d),
                        _ => v.get(i, j - 2 * d),
                    });
                    LayerParams::Transformer {
                        w_qkv: store.add(p("attn.w_qkv"), qkv),
                        b_qkv: store.add(p("attn.b_qkv"), Tensor::zeros(1, 3 * d)),
                        w_o: store.add(p("attn.w_o"), xavier_uniform(d, d, rng)),
                        b_o: store.add(p("attn.b_o"), Tensor::zeros(1, d)),
                        ln1_g: store.add(p("ln1.gamma"), constant(1, d, 1.0)),
                        ln1_b: store.add(p("ln1.beta"), Tensor::zeros(1, d)),
                        w_ff1: store.add(p("ff.w1"), xavier_uniform(d, f, rng)),
                        b_ff1: store.add(p("ff.b1"), Tensor::zeros(1, f)),
                        w_ff2: store.add(p("ff.w2"), xavier_uniform(f, d, rng)),
                        b_ff2: store.add(p("ff.b2"), Tensor::zeros(1, d)),
                        ln2_g: store.add(p("ln2.gamma"), constant(1, d, 1.0)),
                        ln2_b: store.add(p("ln2.beta"), Tensor::zeros(1, d)),
                    }
                }
                Architecture::Lstm => {
                    let h = config.lstm_hidden;
                    let input = if l == 0 { d } else { h };
                    let forget_one = Tensor::from_fn(1, 4 * h, |_, j| {
                        if (h..2 * h).contains(&j) {
                            T::one()
                        } else {
                            T::zero()
                        }
                    });
                    LayerParams::Lstm {
                        w_ih: store.add(p("w_ih"), xavier_uniform(input, 4 * h, rng)),
                        b_ih: store.add(p("b_ih"), forget_one),
                        w_hh: store.add(p("w_hh"), xavier_uniform(h, 4 * h, rng)),
                        b_hh: store.add(p("b_hh"), Tensor::zeros(1, 4 * h)),
                    }
                }
            });
        }
        if config.architecture == Architecture::Lstm {
            let h = config.lstm_hidden;
            projection = Some((
                store.add(format!("{ENCODER_PREFIX}proj.weight"), xavier_uniform(h, d, rng)),
                store.add(format!("{ENCODER_PREFIX}proj.bias"), Tensor::zeros(1, d)),
            ));
        }
        Ok(Self {
            config: config.clone(),
            layers,
            projection,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Encodes padded rows `x: [N, model_size]`. `causal` restricts
    /// Transformer attention to the left context; the LSTM always runs left
    /// to right. Dropout applies only when `rng` is given.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        layout: &SeqLayout,
        causal: bool,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Var, NeuralError> {
        let d = self.config.model_size;
        let xv = g.value(x);
        if xv.shape() != [layout.rows(), d] {
            return Err(NeuralError::ShapeMismatch {
                what: "encoder input".into(),
                expected: vec![layout.rows(), d],
                found: xv.shape().to_vec(),
            });
        }
        if layout.max_len > self.config.max_positions {
            return Err(NeuralError::SequenceTooLong {
                length: layout.max_len,
                horizon: self.config.max_positions,
            });
        }
        let p = if rng.is_some() { self.config.dropout } else { 0.0 };
        let mut h = x;
        if self.config.architecture == Architecture::Transformer
            && self.config.positional == PositionalEncoding::Sinusoidal
        {
            let pe = g.input(positional_rows(layout, d));
            h = g.add(h, pe);
        }
        if let Some(r) = rng.as_deref_mut() {
            h = g.dropout(h, p, r);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerParams::Transformer {
                    w_qkv,
                    b_qkv,
                    w_o,
                    b_o,
                    ln1_g,
                    ln1_b,
                    w_ff1,
                    b_ff1,
                    w_ff2,
                    b_ff2,
                    ln2_g,
                    ln2_b,
                } => {
                    let qkv = linear(g, store, h, w_qkv, b_qkv);
                    let a = g.attention(qkv, layout, self.config.heads, causal);
                    let mut a = linear(g, store, a, w_o, b_o);
                    if let Some(r) = rng.as_deref_mut() {
                        a = g.dropout(a, p, r);
                    }
                    let res = g.add(h, a);
                    let (lg, lb) = (g.param(store, ln1_g), g.param(store, ln1_b));
                    h = g.layer_norm(res, lg, lb, LAYER_NORM_EPS);
                    let f = linear(g, store, h, w_ff1, b_ff1);
                    let f = g.relu(f);
                    let mut f = linear(g, store, f, w_ff2, b_ff2);
                    if let Some(r) = rng.as_deref_mut() {
                        f = g.dropout(f, p, r);
                    }
                    let res = g.add(h, f);
                    let (lg, lb) = (g.param(store, ln2_g), g.param(store, ln2_b));
                    h = g.layer_norm(res, lg, lb, LAYER_NORM_EPS);
                }
                LayerParams::Lstm {
                    w_ih,
                    b_ih,
                    w_hh,
                    b_hh,
                } => {
                    let gates = linear(g, store, h, w_ih, b_ih);
                    let bh = g.param(store, b_hh);
                    let gates = g.add_bias(gates, bh);
                    let whh = g.param(store, w_hh);
                    h = g.lstm(gates, whh, layout, false);
                    if l + 1 < self.layers.len() {
                        if let Some(r) = rng.as_deref_mut() {
                            h = g.dropout(h, p, r);
                        }
                    }
                }
            }
        }
        if let Some((w, b)) = self.projection {
            h = linear(g, store, h, w, b);
        }
        if let Some(r) = rng.as_deref_mut() {
            h = g.dropout(h, p, r);
        }
        Ok(h)
    }
}

/// `x · W + b` for parameters `W: [in, out]`, `b: [1, out]`.
pub fn linear<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, w: ParamId, b: ParamId) -> Var {
    let (wv, bv) = (g.param(store, w), g.param(store, b));
    let y = g.matmul(x, wv);
    g.add_bias(y, bv)
}

/// Sine/cosine position table with `d` columns for positions `0..len`.
pub fn sinusoidal_table<T: Scalar>(len: usize, d: usize) -> Tensor<T> {
    Tensor::from_fn(len, d, |pos, j| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
        T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

fn positional_rows<T: Scalar>(layout: &SeqLayout, d: usize) -> Tensor<T> {
    let table = sinusoidal_table::<T>(layout.max_len, d);
    let mut out = Tensor::zeros(layout.rows(), d);
    for b in 0..layout.batch() {
        for t in 0..layout.max_len {
            out.row_mut(layout.row(b, t)).copy_from_slice(table.row(t));
        }
    }
    out
}

/// `logits[t][w] = hidden[t] · embedding[w]`: the output layer shares the
/// embedding matrix.
pub fn tied_logits<T: Scalar>(g: &mut Graph<T>, hidden: Var, embedding: Var) -> Result<Var, NeuralError> {
    let (h, e) = (g.value(hidden).cols(), g.value(embedding).cols());
    if h != e {
        return Err(NeuralError::ShapeMismatch {
            what: "tied projection".into(),
            expected: vec![e],
            found: vec![h],
        });
    }
    Ok(g.matmul_nt(hidden, embedding))
}

/// Token embedding, encoder, and an output layer tied to the embedding.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub embedding: ParamId,
    pub encoder: Encoder,
    pub vocab_size: usize,
    /// Leading embedding rows scored by the output layer; rows past it
    /// (mask and padding symbols) are input-only.
    pub output_classes: usize,
}

impl LanguageModel {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        config: &EncoderConfig,
        vocab_size: usize,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let embedding = store.add(EMBEDDING_NAME, xavier_uniform(vocab_size, config.model_size, rng));
        let encoder = Encoder::new(config, store, rng)?;
        Ok(Self {
            embedding,
            encoder,
            vocab_size,
            output_classes: vocab_size,
        })
    }

    pub fn with_output_classes(mut self, classes: usize) -> Self {
        assert!(classes >= 1 && classes <= self.vocab_size, "output classes outside the vocabulary");
        self.output_classes = classes;
        self
    }

    /// Encoder outputs for padded token rows (`ids.len() == layout.rows()`).
    pub fn hidden<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        ids: &[usize],
        layout: &SeqLayout,
        causal: bool,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var, NeuralError> {
        let e = g.param(store, self.embedding);
        let x = g.gather_rows(e, ids);
        self.encoder.forward(g, store, x, layout, causal, rng)
    }

    /// Logits over the first `output_classes` ids for the given rows of
    /// `hidden`.
    pub fn logits<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        hidden: Var,
        rows: &[usize],
    ) -> Result<Var, NeuralError> {
        let h = g.gather_rows(hidden, rows);
        let mut e = g.param(store, self.embedding);
        if self.output_classes < self.vocab_size {
            e = g.gather_rows(e, &(0..self.output_classes).collect::<Vec<_>>());
        }
        tied_logits(g, h, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts_match_formula() {
        for cfg in [
            EncoderConfig::paper_lstm(),
            EncoderConfig::paper_transformer(),
            EncoderConfig::desk_lstm(),
            EncoderConfig::desk_transformer(),
        ] {
            let mut store = ParamStore::<f32>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Encoder::new(&cfg, &mut store, &mut rng).unwrap();
            assert_eq!(store.count_prefix(ENCODER_PREFIX), cfg.non_embedding_params());
        }
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = EncoderConfig {
            heads: 7,
            ..EncoderConfig::paper_transformer()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn identity_embedding_logits() {
        let mut g = Graph::<f64>::new();
        let e = g.input(Tensor::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }));
        let h = g.input(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let l = tied_logits(&mut g, h, e).unwrap();
        assert_eq!(g.value(l).data(), &[1.0, 2.0, 3.0]);
        let bad = g.input(Tensor::zeros(1, 2));
        assert!(tied_logits(&mut g, bad, e).is_err());
    }

    #[test]
    fn scaled_row_wins_argmax() {
        // orthogonal rows of different lengths
        let emb = Tensor::from_fn(4, 4, |i, j| if i == j { [2.0, 3.0, 0.5, 4.0][i] } else { 0.0 });
        let w = 2;
        let norm2: f64 = emb.row(w).iter().map(|x| x * x).sum();
        let mut g = Graph::new();
        let e = g.input(emb.clone());
        let h = g.input(Tensor::from_vec(1, 4, emb.row(w).iter().map(|x| x / norm2).collect()));
        let l = tied_logits(&mut g, h, e).unwrap();
        let row = g.value(l).row(0).to_vec();
        let best = (0..4).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, w);
        assert!((row[w] - 1.0).abs() < 1e-12);
    }
}
