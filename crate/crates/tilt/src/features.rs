//! Fresh input layer for downstream tasks: word embeddings concatenated
//! with character BiLSTM features, projected to the encoder width.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use tiltlab_core::corpusio::{build_vocab, Treebank, TreebankSentence, VocabMap};
use tiltlab_neural::{linear, xavier_uniform, Graph, ParamId, ParamStore, SeqLayout, Tensor, Var};

use crate::{Result, TiltError};

/// Longer words keep their first `MAX_CHARS` characters.
pub const MAX_CHARS: usize = 20;
pub const PREFIX: &str = "features.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub word_cap: usize,
    pub dropout: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            word_dim: 100,
            char_dim: 32,
            char_hidden: 50,
            word_cap: 10_000,
            dropout: 0.33,
        }
    }
}

/// Word, character, label and tag inventories of a training treebank.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub words: VocabMap,
    chars: BTreeMap<char, usize>,
    pub labels: Vec<String>,
    pub tags: Vec<String>,
}

impl Lexicon {
    pub fn from_treebank(train: &Treebank, word_cap: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(TiltError::Data("empty training treebank".into()));
        }
        let words = build_vocab(train.sentences.iter().map(|s| s.forms.join(" ")), word_cap)
            .map_err(|e| TiltError::Data(e.to_string()))?;
        let mut chars = BTreeSet::new();
        let mut labels = BTreeSet::new();
        let mut tags = BTreeSet::new();
        for s in &train.sentences {
            for f in &s.forms {
                chars.extend(f.chars());
            }
            labels.extend(s.deprels.iter().cloned());
            tags.extend(s.upos.iter().cloned());
        }
        Ok(Self {
            words,
            chars: chars.into_iter().enumerate().map(|(i, c)| (c, i)).collect(),
            labels: labels.into_iter().collect(),
            tags: tags.into_iter().collect(),
        })
    }

    /// Rejects an evaluation treebank that is empty or uses labels or tags
    /// unseen in training.
    pub fn check(&self, eval: &Treebank) -> Result<()> {
        if eval.is_empty() {
            return Err(TiltError::Data("empty evaluation treebank".into()));
        }
        for s in &eval.sentences {
            if let Some(l) = s.deprels.iter().find(|l| self.label(l).is_none()) {
                return Err(TiltError::Data(format!("label '{l}' does not occur in training")));
            }
            if let Some(t) = s.upos.iter().find(|t| self.tag(t).is_none()) {
                return Err(TiltError::Data(format!("tag '{t}' does not occur in training")));
            }
        }
        Ok(())
    }

    pub fn label(&self, l: &str) -> Option<usize> {
        self.labels.binary_search_by(|x| x.as_str().cmp(l)).ok()
    }

    pub fn tag(&self, t: &str) -> Option<usize> {
        self.tags.binary_search_by(|x| x.as_str().cmp(t)).ok()
    }

    pub fn word_rows(&self) -> usize {
        self.words.total_ids()
    }

    pub fn word(&self, form: &str) -> usize {
        self.words.id(form) as usize
    }

    pub fn word_pad(&self) -> usize {
        self.words.pad_id() as usize
    }

    /// Character table rows: known characters, unknown, padding.
    pub fn char_rows(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn chars_of(&self, form: &str) -> Vec<usize> {
        let unknown = self.chars.len();
        let ids: Vec<usize> = form
            .chars()
            .take(MAX_CHARS)
            .map(|c| self.chars.get(&c).copied().unwrap_or(unknown))
            .collect();
        if ids.is_empty() {
            vec![unknown + 1]
        } else {
            ids
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CharLstm {
    w_ih: ParamId,
    b: ParamId,
    w_hh: ParamId,
}

#[derive(Debug, Clone)]
pub struct Featurizer {
    config: FeatureConfig,
    word_emb: ParamId,
    char_emb: ParamId,
    forward: CharLstm,
    backward: CharLstm,
    proj_w: ParamId,
    proj_b: ParamId,
}

impl Featurizer {
    pub fn new<R: Rng + ?Sized>(
        config: FeatureConfig,
        lex: &Lexicon,
        output: usize,
        store: &mut ParamStore<f32>,
        rng: &mut R,
    ) -> Self {
        let hc = config.char_hidden;
        let lstm = |dir: &str, store: &mut ParamStore<f32>, rng: &mut R| {
            let forget_one = Tensor::from_fn(1, 4 * hc, |_, j| if (hc..2 * hc).contains(&j) { 1.0 } else { 0.0 });
            CharLstm {
                w_ih: store.add(format!("{PREFIX}char.{dir}.w_ih"), xavier_uniform(config.char_dim, 4 * hc, rng)),
                b: store.add(format!("{PREFIX}char.{dir}.b"), forget_one),
                w_hh: store.add(format!("{PREFIX}char.{dir}.w_hh"), xavier_uniform(hc, 4 * hc, rng)),
            }
        };
        let word_emb = store.add(format!("{PREFIX}word.weight"), xavier_uniform(lex.word_rows(), config.word_dim, rng));
        let char_emb = store.add(format!("{PREFIX}char.weight"), xavier_uniform(lex.char_rows(), config.char_dim, rng));
        let forward = lstm("fwd", store, rng);
        let backward = lstm("bwd", store, rng);
        let width = config.word_dim + 2 * hc;
        Self {
            config,
            word_emb,
            char_emb,
            forward,
            backward,
            proj_w: store.add(format!("{PREFIX}proj.weight"), xavier_uniform(width, output, rng)),
            proj_b: store.add(format!("{PREFIX}proj.bias"), Tensor::zeros(1, output)),
        }
    }

    /// Padded `[layout.rows(), output]` encoder inputs for a batch.
    pub fn forward(
        &self,
        g: &mut Graph<f32>,
        store: &ParamStore<f32>,
        lex: &Lexicon,
        sentences: &[&TreebankSentence],
        layout: &SeqLayout,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Var {
        let mut word_ids = vec![lex.word_pad(); layout.rows()];
        let mut char_seqs: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![0usize; layout.rows()];
        for (b, s) in sentences.iter().enumerate() {
            for (t, form) in s.forms.iter().enumerate() {
                let r = layout.row(b, t);
                word_ids[r] = lex.word(form);
                char_seqs.push(lex.chars_of(form));
                slot[r] = char_seqs.len();
            }
        }
        let clayout = SeqLayout::new(char_seqs.iter().map(Vec::len).collect());
        let mut char_ids = vec![lex.char_rows() - 1; clayout.rows()];
        for (w, cs) in char_seqs.iter().enumerate() {
            for (k, &c) in cs.iter().enumerate() {
                char_ids[clayout.row(w, k)] = c;
            }
        }
        let ce = g.param(store, self.char_emb);
        let cx = g.gather_rows(ce, &char_ids);
        let run = |g: &mut Graph<f32>, p: CharLstm, reverse: bool| {
            let gates = linear(g, store, cx, p.w_ih, p.b);
            let whh = g.param(store, p.w_hh);
            g.lstm(gates, whh, &clayout, reverse)
        };
        let fwd = run(g, self.forward, false);
        let bwd = run(g, self.backward, true);
        let last: Vec<usize> = (0..char_seqs.len()).map(|w| clayout.row(w, char_seqs[w].len() - 1)).collect();
        let first: Vec<usize> = (0..char_seqs.len()).map(|w| clayout.row(w, 0)).collect();
        let fl = g.gather_rows(fwd, &last);
        let bf = g.gather_rows(bwd, &first);
        let chars = g.concat_cols(fl, bf);
        let zero = g.input(Tensor::zeros(1, 2 * self.config.char_hidden));
        let table = g.concat_rows(zero, chars);
        let chars = g.gather_rows(table, &slot);
        let we = g.param(store, self.word_emb);
        let words = g.gather_rows(we, &word_ids);
        let mut x = g.concat_cols(words, chars);
        if let Some(r) = rng.as_deref_mut() {
            x = g.dropout(x, self.config.dropout, r);
        }
        linear(g, store, x, self.proj_w, self.proj_b)
    }
}
