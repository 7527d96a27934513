use serde::{Deserialize, Serialize};

use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;
use crate::NeuralError;

/// `model_size^-0.5 · min(step^-0.5, step · warmup^-1.5)`.
pub fn noam_lr(step: u64, model_size: usize, warmup: u64) -> f64 {
    let s = step.max(1) as f64;
    (model_size as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `θ ← θ − lr·wd·θ` before the Adam update.
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            weight_decay: 0.01,
            clip_norm: Some(0.25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    moments: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr`. Frozen parameters are
    /// skipped. A non-finite gradient aborts the step before any parameter
    /// changes.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[(ParamId, &[T])],
        lr: f64,
    ) -> Result<StepReport, NeuralError> {
        let live: Vec<(ParamId, &[T])> = grads
            .iter()
            .filter(|(id, _)| !store.is_frozen(*id))
            .copied()
            .collect();
        let mut sq = 0.0f64;
        for (id, g) in &live {
            let s: f64 = g.iter().map(|x| x.as_f64() * x.as_f64()).sum();
            if !s.is_finite() {
                return Err(NeuralError::NonFiniteGradient(store.param(*id).name.clone()));
            }
            sq += s;
        }
        let norm = sq.sqrt();
        let scale = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for (id, g) in live {
            let n = g.len();
            let (m, v) = self.moments[id.0].get_or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
            let theta = store.value_mut(id).data_mut();
            assert_eq!(theta.len(), n, "gradient shape differs from parameter");
            let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
            let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
            let decay = T::of(1.0 - lr * c.weight_decay);
            let (s, lr_t, eps) = (T::of(scale), T::of(lr), T::of(c.eps));
            let (ibc1, ibc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
            for i in 0..n {
                let gi = g[i] * s;
                m[i] = b1 * m[i] + ob1 * gi;
                v[i] = b2 * v[i] + ob2 * gi * gi;
                let mhat = m[i] * ibc1;
                let vhat = v[i] * ibc2;
                theta[i] = theta[i] * decay - lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(StepReport {
            grad_norm: norm,
            clipped: scale < 1.0,
        })
    }
}
