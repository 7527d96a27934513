use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::GenConfig;
use super::sampler::PreparedSampler;
use super::structure::{self, PairRole, Structure};
use super::vocab::{TokenId, Vocabulary};
use super::GenError;

pub type Sentence = Vec<TokenId>;

const HEADER_PREFIX: &str = "# genconfig-sha256=";
const WRITE_CHUNK: usize = 4096;

/// Deterministic RNG stream for sentence `index` of a corpus seeded with
/// `seed`: the ChaCha key comes from the seed, the stream id is the index.
pub fn sentence_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates sentences of one artificial language. Sentence `i` depends only
/// on `(seed, i)`.
#[derive(Debug, Clone)]
pub struct CorpusGenerator {
    config: GenConfig,
    sampler: PreparedSampler,
}

impl CorpusGenerator {
    pub fn new(config: GenConfig) -> Result<Self, GenError> {
        config.validate()?;
        let sampler = config.sampler.prepare(config.sampler_items())?;
        Ok(Self { config, sampler })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn sampler(&self) -> &PreparedSampler {
        &self.sampler
    }

    /// Role arrangement of sentence `index` (structured languages only).
    pub fn roles(&self, index: u64) -> Option<Vec<PairRole>> {
        let mut rng = sentence_rng(self.config.seed, index);
        let length = self.config.lengths.sample(&mut rng);
        self.roles_with(length, &mut rng)
    }

    fn roles_with(&self, length: usize, rng: &mut ChaCha8Rng) -> Option<Vec<PairRole>> {
        let spec = &self.config.structure;
        let pairs = match spec.structure {
            Structure::None => return None,
            _ => structure::sample_pairs(
                &self.sampler,
                structure::pair_count_for_length(length),
                rng,
            ),
        };
        Some(match spec.structure {
            Structure::Flat => structure::arrange_flat(&pairs, rng),
            Structure::Nesting => structure::arrange_nesting(&pairs, spec.open_threshold, rng),
            Structure::None => unreachable!(),
        })
    }

    pub fn sentence(&self, index: u64) -> Sentence {
        let mut rng = sentence_rng(self.config.seed, index);
        let length = self.config.lengths.sample(&mut rng);
        match self.roles_with(length, &mut rng) {
            None => self.sampler.sample_sentence(length, &mut rng),
            Some(roles) => structure::render_pairs(
                &roles,
                self.config.structure.rendering,
                &self.config.vocabulary,
            ),
        }
    }

    /// All sentences, generated on the current rayon pool.
    pub fn generate(&self) -> Corpus {
        let sentences = (0..self.config.sentence_count as u64)
            .into_par_iter()
            .map(|i| self.sentence(i))
            .collect();
        Corpus {
            vocabulary: self.config.vocabulary,
            sentences,
        }
    }

    /// Same as [`generate`](Self::generate) on a dedicated pool of `threads` workers.
    pub fn generate_with_threads(&self, threads: usize) -> Result<Corpus, GenError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| GenError::Config(e.to_string()))?;
        Ok(pool.install(|| self.generate()))
    }

    /// Streams the corpus as text: provenance header, then one sentence per
    /// line. Sentences are generated in parallel chunks and written in order.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{HEADER_PREFIX}{}", self.config.digest())?;
        let vocab = self.config.vocabulary;
        let n = self.config.sentence_count as u64;
        let mut start = 0u64;
        while start < n {
            let end = (start + WRITE_CHUNK as u64).min(n);
            let lines: Vec<String> = (start..end)
                .into_par_iter()
                .map(|i| render_line(&vocab, &self.sentence(i)))
                .collect();
            for line in lines {
                out.write_all(line.as_bytes())?;
                out.write_all(b"\n")?;
            }
            start = end;
        }
        out.flush()
    }
}

/// Sentences plus the vocabulary that renders them.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn write<W: Write>(&self, mut out: W, digest: Option<&str>) -> io::Result<()> {
        if let Some(d) = digest {
            writeln!(out, "{HEADER_PREFIX}{d}")?;
        }
        for s in &self.sentences {
            writeln!(out, "{}", render_line(&self.vocabulary, s))?;
        }
        out.flush()
    }

    /// Parses corpus text. Lines starting with `#` are comments; the
    /// provenance digest, when present, is returned alongside.
    pub fn read<R: BufRead>(
        input: R,
        vocabulary: Vocabulary,
    ) -> Result<(Self, Option<String>), GenError> {
        let mut digest = None;
        let mut sentences = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') {
                if let Some(d) = line.strip_prefix(HEADER_PREFIX) {
                    digest = Some(d.trim().to_string());
                }
                continue;
            }
            let sentence = line
                .split_whitespace()
                .map(|tok| vocabulary.parse(tok))
                .collect::<Result<Sentence, _>>()
                .map_err(|e| GenError::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            sentences.push(sentence);
        }
        Ok((
            Self {
                vocabulary,
                sentences,
            },
            digest,
        ))
    }
}

pub fn render_line(vocab: &Vocabulary, sentence: &[TokenId]) -> String {
    let mut line = String::with_capacity(sentence.len() * 5);
    for (i, &t) in sentence.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&vocab.render(t));
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sentences_writes_header_only() {
        let g = CorpusGenerator::new(GenConfig::preset("zipf", 100, 1, 0).unwrap()).unwrap();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(HEADER_PREFIX));
    }

    #[test]
    fn written_text_reads_back() {
        for name in ["uniform", "nesting_dep", "flat_paren"] {
            let g = CorpusGenerator::new(GenConfig::preset(name, 100, 5, 50).unwrap()).unwrap();
            let mut buf = Vec::new();
            g.write(&mut buf).unwrap();
            let (corpus, digest) = Corpus::read(&buf[..], g.config().vocabulary).unwrap();
            assert_eq!(corpus, g.generate());
            assert_eq!(digest.unwrap(), g.config().digest());
        }
    }

    #[test]
    fn structured_sentence_lengths() {
        let g = CorpusGenerator::new(GenConfig::preset("nesting_dep", 100, 5, 0).unwrap()).unwrap();
        for i in 0..200 {
            let s = g.sentence(i);
            assert!(s.len() % 2 == 0 && s.len() >= 6 && s.len() <= 60);
        }
    }
}
