//! Named parameter storage and initialization.

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const EMBED_INIT_STD: f64 = 0.02;

/// Insertion-ordered map from dotted path to gradient-tracking leaf.
#[derive(Default, Clone)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Tensor> {
        let name = name.into();
        if !tensor.requires_grad() {
            return Err(Error::Config(format!("parameter {name} does not track gradients")));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, tensor.clone());
        Ok(tensor)
    }

    /// Truncated normal (cut at two standard deviations).
    pub fn truncated_normal(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let normal = Normal::new(0.0, std).expect("positive std");
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let v: f64 = normal.sample(rng);
                if v.abs() <= 2.0 * std {
                    break v;
                }
            })
            .collect();
        self.insert(name, Tensor::param(data, shape)?)
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform_fan_in(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor::param(data, shape)?)
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.insert(name, Tensor::param(vec![value; n], shape)?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }

    /// Merges another store; names must not collide.
    pub fn extend(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            self.insert(name, t.clone())?;
        }
        Ok(())
    }

    /// Copies values for every name in `self` that `source` also holds.
    /// Returns the names that were copied. Shape disagreements are errors.
    pub fn load_matching(&self, source: &[(String, Vec<usize>, Vec<f64>)]) -> Result<Vec<String>> {
        let mut mismatched = Vec::new();
        let mut copied = Vec::new();
        for (name, shape, data) in source {
            let Some(t) = self.tensors.get(name) else { continue };
            if t.shape() != shape.as_slice() {
                mismatched.push(name.clone());
                continue;
            }
            copied.push((name.clone(), t, data));
        }
        if !mismatched.is_empty() {
            return Err(Error::CheckpointMismatch { names: mismatched });
        }
        Ok(copied
            .into_iter()
            .map(|(name, t, data)| {
                t.data_mut().copy_from_slice(data);
                name
            })
            .collect())
    }

    /// Owned snapshot `(name, shape, values)` in store order.
    pub fn snapshot(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec(), v.to_vec()))
            .collect()
    }
}
