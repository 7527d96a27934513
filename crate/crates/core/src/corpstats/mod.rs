//! Corpus validation and run-level statistics.

mod arcs;
mod frequency;
mod welch;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langgen::{Corpus, LengthDistribution};

pub use arcs::{
    check_nested, count_crossings, extract_arcs, is_nested, Arc, ArcSet, SurfaceToken,
    UnmatchedTokens,
};
pub use frequency::{
    fit_zipf_exponent, fit_zipf_exponent_f64, rank_frequency, tv_distance, RankFrequencyTable,
    DEFAULT_MIN_FREQ,
};
pub use welch::{mean, sample_variance, welch_t_test, RunAggregate, WelchResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
}

/// Summary emitted by `stats`. Structure fields are present only when the
/// corpus carries pair structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub sentences: usize,
    pub tokens: usize,
    pub distinct_tokens: usize,
    pub alpha_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welch: Option<WelchResult>,
}

/// Characterizes a corpus. `structured` enables arc checks; `lengths`
/// enables the total-variation comparison of sentence lengths.
pub fn corpus_report(
    corpus: &Corpus,
    structured: bool,
    lengths: Option<&LengthDistribution>,
) -> CorpusReport {
    let table = rank_frequency(&corpus.sentences);
    let alpha_hat = fit_zipf_exponent(&table, DEFAULT_MIN_FREQ).ok();
    let mut report = CorpusReport {
        sentences: corpus.len(),
        tokens: corpus.token_count(),
        distinct_tokens: table.entries.len(),
        alpha_hat,
        balanced_rate: None,
        nested_rate: None,
        crossing_rate: None,
        tv_distance: None,
        welch: None,
    };
    if structured {
        let (mut balanced, mut nested, mut crossing) = (0usize, 0usize, 0usize);
        for s in &corpus.sentences {
            let toks = SurfaceToken::from_ids(s, &corpus.vocabulary);
            if let Ok(arcs) = extract_arcs(&toks) {
                balanced += 1;
                if count_crossings(&arcs) == 0 {
                    nested += 1;
                } else {
                    crossing += 1;
                }
            }
        }
        let n = corpus.len().max(1) as f64;
        report.balanced_rate = Some(balanced as f64 / n);
        report.nested_rate = Some(nested as f64 / n);
        report.crossing_rate = Some(crossing as f64 / n);
    }
    if let Some(dist) = lengths {
        let mut counts: HashMap<usize, u64> = HashMap::new();
        for s in &corpus.sentences {
            *counts.entry(s.len()).or_default() += 1;
        }
        report.tv_distance = Some(tv_distance(&counts, dist));
    }
    report
}
