//! Loading corpora, treebanks and encoders named on the command line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::Args;
use tiltlab::transfer::EncoderSource;
use tiltlab::TokenCorpus;
use tiltlab_core::corpusio::{build_vocab, read_conllu, Treebank, VocabMap};
use tiltlab_core::langgen::{Corpus, GenConfig, Rendering, Vocabulary};
use tiltlab_core::langgen::{Structure, StructureSpec, PairRendering};
use tiltlab_neural::{Architecture, Checkpoint, EncoderConfig};

use crate::failure::{Failure, Outcome};
use crate::settings::Settings;

pub fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))
}

pub fn read_lines(path: &Path) -> Outcome<Vec<String>> {
    Ok(open(path)?.lines().collect::<Result<_, _>>()?)
}

/// Canonical short name of a generated language.
pub fn language_name(config: &GenConfig) -> String {
    let StructureSpec { structure, rendering, .. } = config.structure;
    let shape = match structure {
        Structure::None => return config.sampler.name().to_string(),
        Structure::Flat => "flat",
        Structure::Nesting => "nesting",
    };
    let render = match rendering {
        PairRendering::Dependency => "dep",
        PairRendering::Parenthesis => "paren",
    };
    format!("{shape}_{render}")
}

/// Vocabulary of an artificial corpus file, inferred from its tokens:
/// bracketed tokens mean a head/tail vocabulary, and the size covers the
/// largest id seen unless `size` is given.
pub fn infer_vocabulary(lines: &[String], size: Option<usize>) -> Outcome<Vocabulary> {
    let mut bracketed = false;
    let mut max_id: Option<u64> = None;
    for (n, line) in lines.iter().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            if matches!(tok, "<oov>" | "<mask>" | "<pad>") {
                continue;
            }
            let digits = if let Some(r) = tok.strip_prefix('<') {
                bracketed = true;
                r
            } else if let Some(r) = tok.strip_suffix('>') {
                bracketed = true;
                r
            } else {
                tok
            };
            let id: u64 = digits
                .parse()
                .map_err(|_| Failure::data(format!("line {}: '{tok}' is not an artificial-language token", n + 1)))?;
            max_id = Some(max_id.map_or(id, |m| m.max(id)));
        }
    }
    let max_id = max_id.ok_or_else(|| Failure::data("corpus has no tokens"))? as usize;
    let rendering = if bracketed { Rendering::PairBracketed } else { Rendering::PlainInteger };
    let inferred = if bracketed { 2 * (max_id + 1) } else { max_id + 1 };
    let size = match size {
        Some(s) if s < inferred => {
            return Err(Failure::data(format!("corpus uses ids beyond a vocabulary of {s}")));
        }
        Some(s) => s,
        None => inferred.max(2),
    };
    Ok(Vocabulary::new(size, rendering)?)
}

pub fn read_artificial(path: &Path, size: Option<usize>) -> Outcome<Corpus> {
    let lines = read_lines(path)?;
    let vocab = infer_vocabulary(&lines, size)?;
    let text = lines.join("\n");
    Ok(Corpus::read(text.as_bytes(), vocab)?.0)
}

/// A pretraining corpus: natural text when `vocab` is set (a vocabulary
/// file, or `cap:N` to build one from the corpus), artificial otherwise.
pub fn read_training_corpus(path: &Path, vocab: Option<&str>, size: Option<usize>) -> Outcome<TokenCorpus> {
    match vocab {
        None => Ok(TokenCorpus::from_generated(&read_artificial(path, size)?)),
        Some(v) => {
            let lines = read_lines(path)?;
            let map = natural_vocab(v, &lines)?;
            Ok(TokenCorpus::from_lines(lines.iter(), &map))
        }
    }
}

pub fn natural_vocab(spec: &str, lines: &[String]) -> Outcome<VocabMap> {
    if let Some(cap) = spec.strip_prefix("cap:") {
        let cap: usize = cap.parse().map_err(|_| Failure::data(format!("bad vocabulary cap '{cap}'")))?;
        Ok(build_vocab(lines.iter(), cap)?)
    } else {
        Ok(VocabMap::read(open(Path::new(spec))?)?)
    }
}

pub fn treebank(path: &Path, limit: Option<usize>) -> Outcome<Treebank> {
    let tb = read_conllu(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(match limit {
        Some(n) => tb.truncated(n),
        None => tb,
    })
}

/// Encoder settings from `[encoder]`: a `preset` (desk or paper), an
/// `architecture`, and optional size overrides.
pub fn encoder_config(s: &Settings) -> Outcome<EncoderConfig> {
    let arch = match s.get("encoder", "architecture").unwrap_or("transformer") {
        "transformer" => Architecture::Transformer,
        "lstm" => Architecture::Lstm,
        other => return Err(Failure::data(format!("unknown architecture '{other}'"))),
    };
    let mut c = match s.get("encoder", "preset").unwrap_or("desk") {
        "desk" => EncoderConfig::desk_transformer(),
        "paper" => EncoderConfig::paper_transformer(),
        other => return Err(Failure::data(format!("unknown encoder preset '{other}'"))),
    }
    .with_architecture(arch);
    if arch == Architecture::Lstm && s.get("encoder", "preset").unwrap_or("desk") == "desk" {
        c = EncoderConfig::desk_lstm();
    } else if arch == Architecture::Lstm {
        c = EncoderConfig::paper_lstm();
    }
    c.layers = s.parse_or("encoder", "layers", c.layers)?;
    c.model_size = s.parse_or("encoder", "model_size", c.model_size)?;
    c.lstm_hidden = s.parse_or("encoder", "lstm_hidden", c.lstm_hidden)?;
    c.ff_size = s.parse_or("encoder", "ff_size", c.ff_size)?;
    c.heads = s.parse_or("encoder", "heads", c.heads)?;
    c.dropout = s.parse_or("encoder", "dropout", c.dropout)?;
    c.validate()?;
    Ok(c)
}

pub const ENCODER_KEYS: &[&str] = &[
    "preset",
    "architecture",
    "layers",
    "model_size",
    "lstm_hidden",
    "ff_size",
    "heads",
    "dropout",
];

/// Where a downstream run takes its encoder from.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Pretrained encoder checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Untrained encoder built from the [encoder] settings.
    #[arg(long)]
    pub random_weights: bool,
}

/// Resolved encoder with the labels recorded in manifests.
pub struct Source {
    pub source: EncoderSource,
    pub language: String,
    pub objective: Option<String>,
    pub pretrain_seed: u64,
    pub checkpoint: Option<PathBuf>,
}

impl SourceArgs {
    pub fn resolve(&self, settings: &Settings, encoder_seed: u64) -> Outcome<Source> {
        if let Some(path) = &self.checkpoint {
            let ckpt = Checkpoint::load(path)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let meta = &ckpt.meta;
            let language = settings
                .get("run", "language")
                .map(String::from)
                .or_else(|| meta.get("language").and_then(|v| v.as_str()).map(String::from))
                .unwrap_or_else(|| "pretrained".into());
            let objective = meta.get("objective").and_then(|v| v.as_str()).map(String::from);
            let pretrain_seed = meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
            Ok(Source {
                source: EncoderSource::Pretrained(ckpt),
                language,
                objective,
                pretrain_seed,
                checkpoint: Some(path.clone()),
            })
        } else if self.random_weights {
            Ok(Source {
                source: EncoderSource::RandomWeights {
                    config: encoder_config(settings)?,
                    seed: encoder_seed,
                },
                language: settings.get("run", "language").unwrap_or("random_weights").to_string(),
                objective: None,
                pretrain_seed: encoder_seed,
                checkpoint: None,
            })
        } else {
            Err(Failure::usage("one of --checkpoint or --random-weights is required"))
        }
    }
}
