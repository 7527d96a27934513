use std::collections::HashMap;

use crate::langgen::{LengthDistribution, TokenId};

use super::StatsError;

pub const DEFAULT_MIN_FREQ: u64 = 5;

/// Token counts sorted by descending frequency, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFrequencyTable {
    pub entries: Vec<(TokenId, u64)>,
    pub total: u64,
}

impl RankFrequencyTable {
    /// Table from arbitrary `(token, count)` pairs.
    pub fn from_counts(counts: impl IntoIterator<Item = (TokenId, u64)>) -> Self {
        let mut entries: Vec<(TokenId, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total = entries.iter().map(|(_, c)| c).sum();
        Self { entries, total }
    }

    pub fn frequencies(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|(_, c)| *c)
    }
}

pub fn rank_frequency<S: AsRef<[TokenId]>>(corpus: &[S]) -> RankFrequencyTable {
    let mut counts: HashMap<TokenId, u64> = HashMap::new();
    for sentence in corpus {
        for &t in sentence.as_ref() {
            *counts.entry(t).or_default() += 1;
        }
    }
    RankFrequencyTable::from_counts(counts)
}

/// Negated OLS slope of `ln(frequency)` on `ln(rank)` over ranks with
/// frequency at least `min_freq`.
pub fn fit_zipf_exponent(table: &RankFrequencyTable, min_freq: u64) -> Result<f64, StatsError> {
    let points: Vec<(f64, f64)> = table
        .frequencies()
        .enumerate()
        .filter(|(_, f)| *f >= min_freq)
        .map(|(i, f)| (((i + 1) as f64).ln(), (f as f64).ln()))
        .collect();
    if points.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "need at least 2 ranks with frequency >= {min_freq}, found {}",
            points.len()
        )));
    }
    fit_power_law(&points)
}

/// Same fit over raw real-valued frequencies indexed by rank (rank 1 first).
pub fn fit_zipf_exponent_f64(frequencies: &[f64]) -> Result<f64, StatsError> {
    let points: Vec<(f64, f64)> = frequencies
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(i, f)| (((i + 1) as f64).ln(), f.ln()))
        .collect();
    if points.len() < 2 {
        return Err(StatsError::InsufficientData("need at least 2 positive frequencies".into()));
    }
    fit_power_law(&points)
}

fn fit_power_law(points: &[(f64, f64)]) -> Result<f64, StatsError> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(StatsError::InsufficientData("ranks have no spread".into()));
    }
    Ok(-(sxy / sxx))
}

/// Total-variation distance between empirical length counts and `dist`.
pub fn tv_distance(counts: &HashMap<usize, u64>, dist: &LengthDistribution) -> f64 {
    let total: u64 = counts.values().sum();
    let mut lengths: Vec<usize> = counts.keys().copied().chain(dist.support().map(|(l, _)| l)).collect();
    lengths.sort_unstable();
    lengths.dedup();
    0.5 * lengths
        .into_iter()
        .map(|l| {
            let emp = *counts.get(&l).unwrap_or(&0) as f64 / total.max(1) as f64;
            (emp - dist.probability(l)).abs()
        })
        .sum::<f64>()
}
