use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Arc<Tensor<T>>,
    /// Frozen parameters take no optimizer updates and get no gradient
    /// buffers; gradients still flow through them to their inputs.
    pub frozen: bool,
}

/// Named parameter registry shared by all layers of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name '{name}'");
        self.params.push(Param {
            name,
            value: Arc::new(value),
            frozen: false,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    /// Mutable access; copies the tensor if a graph still holds it.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) {
        let old = self.value(id);
        assert_eq!(old.shape(), value.shape(), "shape mismatch for '{}'", self.params[id.0].name);
        self.params[id.0].value = Arc::new(value);
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.params[id.0].value)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.params[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    /// Freezes every parameter whose name starts with `prefix`; returns how
    /// many were frozen.
    pub fn freeze_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.frozen = true;
                n += 1;
            }
        }
        n
    }

    /// Total element count of parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.len())
            .sum()
    }

    pub fn total_count(&self) -> usize {
        self.count_prefix("")
    }

    /// Copies every parameter of `other` whose name matches one here.
    /// Returns the names that were not found.
    pub fn load_matching(&mut self, other: &ParamStore<T>, prefix: &str) -> Vec<String> {
        let mut missing = Vec::new();
        for p in other.params.iter().filter(|p| p.name.starts_with(prefix)) {
            match self.find(&p.name) {
                Some(id) if self.value(id).shape() == p.value.shape() => {
                    self.params[id.0].value = Arc::clone(&p.value);
                }
                _ => missing.push(p.name.clone()),
            }
        }
        missing
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Arc::new(p.value.cast()),
                    frozen: p.frozen,
                })
                .collect(),
        }
    }
}

/// Glorot/Xavier uniform initialization for a `[fan_in, fan_out]` matrix.
pub fn xavier_uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

pub fn constant<T: Scalar>(rows: usize, cols: usize, x: f64) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::of(x))
}
