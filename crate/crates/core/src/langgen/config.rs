use std::collections::BTreeMap;
use std::fmt::Write as _;

use ini::Ini;
use sha2::{Digest, Sha256};

use super::length::LengthDistribution;
use super::sampler::TokenSampler;
use super::structure::{PairRendering, Structure, StructureSpec};
use super::vocab::{Rendering, Vocabulary};
use super::GenError;

/// Complete recipe for one artificial corpus. Identical configs generate
/// identical corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub vocabulary: Vocabulary,
    pub lengths: LengthDistribution,
    pub sampler: TokenSampler,
    pub structure: StructureSpec,
    pub seed: u64,
    pub sentence_count: usize,
}

/// The seven languages studied, by their canonical short names.
pub const LANGUAGE_NAMES: [&str; 7] = [
    "uniform",
    "zipf",
    "loglinear",
    "flat_paren",
    "nesting_paren",
    "flat_dep",
    "nesting_dep",
];

impl GenConfig {
    /// Builds one of the named languages over `size` content tokens with
    /// PTB-fitted lengths. Structured languages draw pairs from Zipf.
    pub fn preset(
        name: &str,
        size: usize,
        seed: u64,
        sentence_count: usize,
    ) -> Result<Self, GenError> {
        let (sampler, structure) = match name {
            "uniform" => (TokenSampler::Uniform, StructureSpec::none()),
            "zipf" => (TokenSampler::zipf(), StructureSpec::none()),
            // word vectors follow the corpus seed
            "loglinear" => (
                TokenSampler::log_linear(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
                StructureSpec::none(),
            ),
            "flat_paren" => (
                TokenSampler::zipf(),
                StructureSpec::new(Structure::Flat, PairRendering::Parenthesis),
            ),
            "nesting_paren" => (
                TokenSampler::zipf(),
                StructureSpec::new(Structure::Nesting, PairRendering::Parenthesis),
            ),
            "flat_dep" => (
                TokenSampler::zipf(),
                StructureSpec::new(Structure::Flat, PairRendering::Dependency),
            ),
            "nesting_dep" => (
                TokenSampler::zipf(),
                StructureSpec::new(Structure::Nesting, PairRendering::Dependency),
            ),
            other => return Err(GenError::Config(format!("unknown language '{other}'"))),
        };
        let config = Self {
            vocabulary: Vocabulary::new(size, rendering_for(&structure))?,
            lengths: LengthDistribution::ptb_default(),
            sampler,
            structure,
            seed,
            sentence_count,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.structure.is_structured() && !self.vocabulary.is_pair_capable() {
            return Err(GenError::Config(format!(
                "structured language needs an even vocabulary, got {}",
                self.vocabulary.size()
            )));
        }
        if self.vocabulary.rendering() != rendering_for(&self.structure) {
            return Err(GenError::Config(
                "vocabulary rendering does not match the structure rendering".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.structure.open_threshold) {
            return Err(GenError::Config(format!(
                "open_threshold {} outside [0, 1]",
                self.structure.open_threshold
            )));
        }
        Ok(())
    }

    /// Number of items the token sampler ranks: pairs for structured
    /// languages, content tokens otherwise.
    pub fn sampler_items(&self) -> usize {
        if self.structure.is_structured() {
            self.vocabulary.pair_count()
        } else {
            self.vocabulary.size()
        }
    }

    pub fn to_ini(&self) -> String {
        let mut ini = Ini::new();
        ini.with_section(Some("vocabulary"))
            .set("size", self.vocabulary.size().to_string());
        let hist = if self.lengths == LengthDistribution::ptb_default() {
            "ptb".to_string()
        } else {
            let mut s = String::new();
            for (l, p) in self.lengths.support() {
                if !s.is_empty() {
                    s.push(' ');
                }
                write!(s, "{l}:{p}").unwrap();
            }
            s
        };
        ini.with_section(Some("lengths")).set("histogram", hist);
        {
            let mut sec = ini.with_section(Some("sampler"));
            sec.set("kind", self.sampler.name());
            match self.sampler {
                TokenSampler::Uniform => {}
                TokenSampler::Zipf { alpha } => {
                    sec.set("alpha", alpha.to_string());
                }
                TokenSampler::LogLinear {
                    dim,
                    vector_scale,
                    vector_seed,
                } => {
                    sec.set("dim", dim.to_string())
                        .set("vector_scale", vector_scale.to_string())
                        .set("vector_seed", vector_seed.to_string());
                }
            }
        }
        ini.with_section(Some("structure"))
            .set(
                "kind",
                match self.structure.structure {
                    Structure::None => "none",
                    Structure::Flat => "flat",
                    Structure::Nesting => "nesting",
                },
            )
            .set(
                "rendering",
                match self.structure.rendering {
                    PairRendering::Parenthesis => "parenthesis",
                    PairRendering::Dependency => "dependency",
                },
            )
            .set("open_threshold", self.structure.open_threshold.to_string());
        ini.with_section(Some("corpus"))
            .set("seed", self.seed.to_string())
            .set("sentences", self.sentence_count.to_string());
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }

    pub fn from_ini(text: &str) -> Result<Self, GenError> {
        let ini = Ini::load_from_str(text).map_err(|e| GenError::Config(e.to_string()))?;
        Self::from_ini_sections(&ini)
    }

    pub fn from_ini_sections(ini: &Ini) -> Result<Self, GenError> {
        let get = |section: &str, key: &str| -> Option<&str> {
            ini.section(Some(section)).and_then(|s| s.get(key))
        };
        let req = |section: &str, key: &str| -> Result<&str, GenError> {
            get(section, key)
                .ok_or_else(|| GenError::Config(format!("missing [{section}] {key}")))
        };
        let size: usize = parse(req("vocabulary", "size")?, "vocabulary.size")?;
        let lengths = match get("lengths", "histogram").unwrap_or("ptb") {
            "ptb" => LengthDistribution::ptb_default(),
            spec => parse_histogram(spec)?,
        };
        let sampler = match req("sampler", "kind")? {
            "uniform" => TokenSampler::Uniform,
            "zipf" => TokenSampler::Zipf {
                alpha: get("sampler", "alpha")
                    .map(|v| parse(v, "sampler.alpha"))
                    .transpose()?
                    .unwrap_or(super::sampler::DEFAULT_ZIPF_ALPHA),
            },
            "loglinear" => TokenSampler::LogLinear {
                dim: get("sampler", "dim")
                    .map(|v| parse(v, "sampler.dim"))
                    .transpose()?
                    .unwrap_or(super::sampler::DEFAULT_LOGLINEAR_DIM),
                vector_scale: get("sampler", "vector_scale")
                    .map(|v| parse(v, "sampler.vector_scale"))
                    .transpose()?
                    .unwrap_or(1.0),
                vector_seed: parse(req("sampler", "vector_seed")?, "sampler.vector_seed")?,
            },
            other => return Err(GenError::Config(format!("unknown sampler '{other}'"))),
        };
        let structure = StructureSpec {
            structure: match get("structure", "kind").unwrap_or("none") {
                "none" => Structure::None,
                "flat" => Structure::Flat,
                "nesting" => Structure::Nesting,
                other => return Err(GenError::Config(format!("unknown structure '{other}'"))),
            },
            rendering: match get("structure", "rendering").unwrap_or("dependency") {
                "parenthesis" => PairRendering::Parenthesis,
                "dependency" => PairRendering::Dependency,
                other => return Err(GenError::Config(format!("unknown rendering '{other}'"))),
            },
            open_threshold: get("structure", "open_threshold")
                .map(|v| parse(v, "structure.open_threshold"))
                .transpose()?
                .unwrap_or(super::structure::DEFAULT_OPEN_THRESHOLD),
        };
        let config = Self {
            vocabulary: Vocabulary::new(size, rendering_for(&structure))?,
            lengths,
            sampler,
            structure,
            seed: parse(req("corpus", "seed")?, "corpus.seed")?,
            sentence_count: parse(req("corpus", "sentences")?, "corpus.sentences")?,
        };
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical INI serialization, hex-encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_ini().as_bytes()))
    }
}

fn rendering_for(structure: &StructureSpec) -> Rendering {
    if structure.is_structured() && structure.rendering == PairRendering::Dependency {
        Rendering::PairBracketed
    } else {
        Rendering::PlainInteger
    }
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, GenError> {
    value
        .trim()
        .parse()
        .map_err(|_| GenError::Config(format!("cannot parse {what} = '{value}'")))
}

fn parse_histogram(spec: &str) -> Result<LengthDistribution, GenError> {
    let mut hist = BTreeMap::new();
    for item in spec.split_whitespace() {
        let (l, p) = item
            .split_once(':')
            .ok_or_else(|| GenError::Config(format!("bad histogram entry '{item}'")))?;
        hist.insert(parse::<usize>(l, "length")?, parse::<f64>(p, "probability")?);
    }
    LengthDistribution::from_histogram(&hist)
}
