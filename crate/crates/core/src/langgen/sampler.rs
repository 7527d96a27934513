use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::vocab::TokenId;
use super::GenError;

pub const DEFAULT_ZIPF_ALPHA: f64 = 1.0;
pub const DEFAULT_LOGLINEAR_DIM: usize = 10;

/// Word-distribution recipe. Items are ranked `0..n`; rank `r` (0-based) is
/// token `r` for unstructured languages and pair `r` for structured ones.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenSampler {
    Uniform,
    Zipf {
        alpha: f64,
    },
    /// `p(w | s) ∝ exp(c_s · v_w)` with word vectors fixed per language and a
    /// fresh discourse vector per sentence.
    LogLinear {
        dim: usize,
        vector_scale: f64,
        /// Seed for the word vectors; the vectors themselves are regenerated
        /// from it on demand.
        vector_seed: u64,
    },
}

impl TokenSampler {
    pub fn zipf() -> Self {
        TokenSampler::Zipf {
            alpha: DEFAULT_ZIPF_ALPHA,
        }
    }

    pub fn log_linear(vector_seed: u64) -> Self {
        TokenSampler::LogLinear {
            dim: DEFAULT_LOGLINEAR_DIM,
            vector_scale: 1.0,
            vector_seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TokenSampler::Uniform => "uniform",
            TokenSampler::Zipf { .. } => "zipf",
            TokenSampler::LogLinear { .. } => "loglinear",
        }
    }

    /// Materializes the sampler over `n` ranked items.
    pub fn prepare(&self, n: usize) -> Result<PreparedSampler, GenError> {
        if n == 0 {
            return Err(GenError::Config("sampler needs at least one item".into()));
        }
        Ok(match *self {
            TokenSampler::Uniform => PreparedSampler::Uniform { n },
            TokenSampler::Zipf { alpha } => {
                if !alpha.is_finite() || alpha < 0.0 {
                    return Err(GenError::Config(format!("invalid zipf exponent {alpha}")));
                }
                let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-alpha)).collect();
                PreparedSampler::Table(CumulativeTable::new(&weights))
            }
            TokenSampler::LogLinear {
                dim,
                vector_scale,
                vector_seed,
            } => {
                if dim == 0 {
                    return Err(GenError::Config("log-linear dimension must be positive".into()));
                }
                PreparedSampler::LogLinear {
                    dim,
                    vectors: word_vectors(n, dim, vector_scale, vector_seed),
                }
            }
        })
    }
}

/// Standard-normal word vectors scaled by `scale`, `n × dim` row-major.
pub fn word_vectors(n: usize, dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Inverse-CDF table: O(log n) per draw by binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeTable {
    cumulative: Vec<f64>,
}

impl CumulativeTable {
    pub fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probability(&self, i: usize) -> f64 {
        if i == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[i] - self.cumulative[i - 1]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[derive(Debug, Clone)]
pub enum PreparedSampler {
    Uniform { n: usize },
    Table(CumulativeTable),
    LogLinear { dim: usize, vectors: Vec<f64> },
}

impl PreparedSampler {
    pub fn item_count(&self) -> usize {
        match self {
            PreparedSampler::Uniform { n } => *n,
            PreparedSampler::Table(t) => t.len(),
            PreparedSampler::LogLinear { dim, vectors } => vectors.len() / dim,
        }
    }

    /// Marginal probability of item `i` for the context-free samplers.
    pub fn probability(&self, i: usize) -> Option<f64> {
        match self {
            PreparedSampler::Uniform { n } => Some(1.0 / *n as f64),
            PreparedSampler::Table(t) => Some(t.probability(i)),
            PreparedSampler::LogLinear { .. } => None,
        }
    }

    /// Draws `count` items that share one sentence context.
    pub fn sample_sentence<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<TokenId> {
        match self {
            PreparedSampler::Uniform { n } => (0..count)
                .map(|_| rng.random_range(0..*n) as TokenId)
                .collect(),
            PreparedSampler::Table(t) => (0..count).map(|_| t.sample(rng) as TokenId).collect(),
            PreparedSampler::LogLinear { dim, vectors } => {
                let discourse: Vec<f64> = (0..*dim)
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                let table = discourse_table(&discourse, vectors);
                (0..count).map(|_| table.sample(rng) as TokenId).collect()
            }
        }
    }
}

/// Per-sentence distribution `softmax(c · v_w)` as a cumulative table.
pub fn discourse_table(discourse: &[f64], vectors: &[f64]) -> CumulativeTable {
    let dim = discourse.len();
    let logits: Vec<f64> = vectors
        .chunks_exact(dim)
        .map(|v| v.iter().zip(discourse).map(|(a, b)| a * b).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    CumulativeTable::new(&weights)
}

/// Draws a sentence of `length` content tokens.
pub fn sample_unstructured_tokens<R: Rng + ?Sized>(
    sampler: &PreparedSampler,
    length: usize,
    rng: &mut R,
) -> Vec<TokenId> {
    sampler.sample_sentence(length, rng)
}
