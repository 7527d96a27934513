use rand::Rng;
use serde::{Deserialize, Serialize};
use tiltlab_neural::SeqLayout;

use crate::{Result, TiltError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Clm,
    Mlm,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Clm => "clm",
            Objective::Mlm => "mlm",
        }
    }

    /// Whether the encoder may only look left.
    pub fn causal(self) -> bool {
        self == Objective::Clm
    }
}

/// Token corruption for masked language modeling: each token is selected
/// with `select_rate`; a selected token becomes MASK, a random content
/// token, or stays as is, with the three rates below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub select_rate: f64,
    pub mask_rate: f64,
    pub random_rate: f64,
    pub keep_rate: f64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        Self {
            select_rate: 0.15,
            mask_rate: 0.8,
            random_rate: 0.1,
            keep_rate: 0.1,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.select_rate, self.mask_rate, self.random_rate, self.keep_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(TiltError::Config("MLM rates must lie in [0, 1]".into()));
        }
        if (self.mask_rate + self.random_rate + self.keep_rate - 1.0).abs() > 1e-9 {
            return Err(TiltError::Config("mask + random + keep rates must sum to 1".into()));
        }
        Ok(())
    }
}

/// What happened to one selected token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    Masked,
    Random,
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    pub ids: Vec<usize>,
    /// Original token at each selected row.
    pub targets: Vec<Option<usize>>,
    pub corruption: Vec<Option<Corruption>>,
}

/// Corrupts the valid rows of a padded batch. Padding is never selected.
pub fn mlm_mask<R: Rng + ?Sized>(
    ids: &[usize],
    layout: &SeqLayout,
    config: &MlmConfig,
    content: usize,
    mask_id: usize,
    rng: &mut R,
) -> Masked {
    let mut out = ids.to_vec();
    let mut targets = vec![None; ids.len()];
    let mut corruption = vec![None; ids.len()];
    for r in layout.valid_rows() {
        if !rng.random_bool(config.select_rate) {
            continue;
        }
        targets[r] = Some(ids[r]);
        let u: f64 = rng.random();
        let kind = if u < config.mask_rate {
            out[r] = mask_id;
            Corruption::Masked
        } else if u < config.mask_rate + config.random_rate {
            out[r] = rng.random_range(0..content);
            Corruption::Random
        } else {
            Corruption::Kept
        };
        corruption[r] = Some(kind);
    }
    Masked {
        ids: out,
        targets,
        corruption,
    }
}

/// Next-token targets: row (b, t) predicts token t+1 of sentence b, so the
/// first token is context only and the last row has no target.
pub fn clm_targets(ids: &[usize], layout: &SeqLayout) -> Vec<Option<usize>> {
    let mut targets = vec![None; ids.len()];
    for (b, &len) in layout.lengths.iter().enumerate() {
        for t in 0..len.saturating_sub(1) {
            targets[layout.row(b, t)] = Some(ids[layout.row(b, t + 1)]);
        }
    }
    targets
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clm_shift() {
        let layout = SeqLayout::new(vec![3, 1]);
        let ids = [5, 6, 7, 8, 0, 0];
        assert_eq!(clm_targets(&ids, &layout), vec![Some(6), Some(7), None, None, None, None]);
    }

    #[test]
    fn zero_select_rate_is_identity() {
        let layout = SeqLayout::new(vec![4]);
        let cfg = MlmConfig {
            select_rate: 0.0,
            ..MlmConfig::default()
        };
        let m = mlm_mask(&[1, 2, 3, 4], &layout, &cfg, 10, 11, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.ids, vec![1, 2, 3, 4]);
        assert!(m.targets.iter().all(Option::is_none));
    }

    #[test]
    fn padding_never_selected() {
        let layout = SeqLayout::new(vec![1, 3]);
        let cfg = MlmConfig {
            select_rate: 1.0,
            ..MlmConfig::default()
        };
        let ids = [1, 12, 12, 2, 3, 4];
        let m = mlm_mask(&ids, &layout, &cfg, 10, 11, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.targets, vec![Some(1), None, None, Some(2), Some(3), Some(4)]);
        assert_eq!(&m.ids[1..3], &[12, 12]);
    }

    #[test]
    fn rates_must_normalize() {
        let cfg = MlmConfig {
            keep_rate: 0.2,
            ..MlmConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(MlmConfig::default().validate().is_ok());
    }
}
