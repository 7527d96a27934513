use std::collections::BTreeMap;

use rand::Rng;

use super::GenError;

/// Sentence-length counts for lengths 6..=60 in the Mikolov-preprocessed
/// PTB training split. Lengths outside the pretraining bounds are dropped.
const PTB_TRAIN_LENGTH_COUNTS: [u32; 55] = [
    630, 739, 929, 992, 1101, 1226, 1508, 1457, 1540, 1529, 1640, 1616, 1714, 1580, 1666, 1599,
    1566, 1566, 1393, 1452, 1365, 1245, 1146, 1102, 1031, 881, 768, 696, 581, 548, 483, 441, 384,
    352, 263, 252, 237, 184, 159, 121, 99, 89, 74, 58, 56, 62, 40, 27, 29, 27, 19, 28, 9, 14, 17,
];

pub const PRETRAIN_MIN_LEN: usize = 6;
pub const PRETRAIN_MAX_LEN: usize = 60;

/// Normalized histogram over sentence lengths with a cumulative table for
/// inverse-CDF sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthDistribution {
    min: usize,
    max: usize,
    /// `probs[i]` is the probability of length `min + i`.
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LengthDistribution {
    /// Builds from explicit probabilities; they must sum to 1 within 1e-9.
    pub fn from_histogram(histogram: &BTreeMap<usize, f64>) -> Result<Self, GenError> {
        let support: Vec<(usize, f64)> = histogram
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(&l, &p)| (l, p))
            .collect();
        let (min, max) = match (support.first(), support.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(GenError::Config("empty length support".into())),
        };
        if min < 1 {
            return Err(GenError::Config("sentence lengths must be at least 1".into()));
        }
        if histogram.values().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GenError::Config("length probabilities must be finite and non-negative".into()));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GenError::Config(format!(
                "length probabilities sum to {total}, expected 1"
            )));
        }
        let mut probs = vec![0.0; max - min + 1];
        for (l, p) in support {
            probs[l - min] = p;
        }
        Ok(Self::from_probs(min, probs))
    }

    /// Builds from raw counts, normalizing them. Counts outside `[min, max]`
    /// are dropped.
    pub fn from_counts(
        counts: &BTreeMap<usize, u64>,
        min: usize,
        max: usize,
    ) -> Result<Self, GenError> {
        if min < 1 || min > max {
            return Err(GenError::Config(format!("invalid length bounds [{min}, {max}]")));
        }
        let kept: Vec<(usize, u64)> = counts
            .range(min..=max)
            .filter(|(_, &c)| c > 0)
            .map(|(&l, &c)| (l, c))
            .collect();
        let total: u64 = kept.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(GenError::Config("empty length support".into()));
        }
        let lo = kept[0].0;
        let hi = kept[kept.len() - 1].0;
        let mut probs = vec![0.0; hi - lo + 1];
        for (l, c) in kept {
            probs[l - lo] = c as f64 / total as f64;
        }
        Ok(Self::from_probs(lo, probs))
    }

    /// Degenerate distribution that always yields `length`.
    pub fn point_mass(length: usize) -> Result<Self, GenError> {
        Self::from_histogram(&BTreeMap::from([(length, 1.0)]))
    }

    /// Uniform over `min..=max`.
    pub fn uniform(min: usize, max: usize) -> Result<Self, GenError> {
        let counts: BTreeMap<usize, u64> = (min..=max).map(|l| (l, 1)).collect();
        Self::from_counts(&counts, min, max)
    }

    /// PTB-fitted histogram truncated to the pretraining bounds [6, 60].
    pub fn ptb_default() -> Self {
        let counts: BTreeMap<usize, u64> = PTB_TRAIN_LENGTH_COUNTS
            .iter()
            .enumerate()
            .map(|(i, &c)| (PRETRAIN_MIN_LEN + i, c as u64))
            .collect();
        Self::from_counts(&counts, PRETRAIN_MIN_LEN, PRETRAIN_MAX_LEN)
            .expect("built-in histogram is valid")
    }

    fn from_probs(min: usize, mut probs: Vec<f64>) -> Self {
        // renormalize so the cumulative table ends at exactly 1
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let max = min + probs.len() - 1;
        Self {
            min,
            max,
            probs,
            cumulative,
        }
    }

    pub fn min(&self) -> usize {
        self.min
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn probability(&self, length: usize) -> f64 {
        if length < self.min || length > self.max {
            0.0
        } else {
            self.probs[length - self.min]
        }
    }

    /// `(length, probability)` for every length with nonzero mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(i, &p)| (self.min + i, p))
    }

    pub fn to_histogram(&self) -> BTreeMap<usize, f64> {
        self.support().collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // u < 1 so idx < len, but zero-probability tails can collide at 1.0
        self.min + idx.min(self.probs.len() - 1)
    }
}
