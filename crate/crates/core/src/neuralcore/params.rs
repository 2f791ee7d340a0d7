use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Gradient buffers keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, name: &str, grad: &Tensor) {
        match self.entries.get_mut(name) {
            Some(existing) => existing
                .add_assign(grad)
                .expect("gradient shape must not change between accumulations"),
            None => {
                self.entries.insert(name.to_string(), grad.clone());
            }
        }
    }

    /// Adds every entry of `other`. Iteration is in name order, so summing the
    /// same buffers in the same order is reproducible.
    pub fn merge(&mut self, other: &Gradients) {
        for (name, g) in &other.entries {
            self.accumulate(name, g);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            g.scale(factor);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Named trainable tensors, each paired with a gradient slot of the same shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    values: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format_version: u32,
    params: BTreeMap<String, TensorRecord>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.grads.insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.values
            .get(name)
            .ok_or_else(|| NnError::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.values
            .get_mut(name)
            .ok_or_else(|| NnError::MissingParameter(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Overwrites the gradient slots; parameters missing from `grads` get zero.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<(), NnError> {
        self.zero_grads();
        for (name, g) in grads.iter() {
            let slot = self
                .grads
                .get_mut(name)
                .ok_or_else(|| NnError::MissingParameter(name.to_string()))?;
            if !slot.same_shape(g) {
                return Err(NnError::Shape(format!(
                    "gradient for {name} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(g.data());
        }
        Ok(())
    }

    pub(crate) fn value_and_grad_mut(&mut self, name: &str) -> (&mut Tensor, &Tensor) {
        let v = self.values.get_mut(name).expect("known parameter");
        let g = self.grads.get(name).expect("gradient slot mirrors parameter");
        (v, g)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = self.snapshot();
        serde_json::to_value(file).expect("parameters serialise")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, NnError> {
        let file: SnapshotFile =
            serde_json::from_value(value).map_err(|e| NnError::Format(e.to_string()))?;
        Self::from_snapshot(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let bytes = serde_json::to_vec(&self.snapshot()).map_err(|e| NnError::Format(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = std::fs::read(path)?;
        let file: SnapshotFile =
            serde_json::from_slice(&bytes).map_err(|e| NnError::Format(e.to_string()))?;
        Self::from_snapshot(file)
    }

    fn snapshot(&self) -> SnapshotFile {
        SnapshotFile {
            format_version: SNAPSHOT_FORMAT_VERSION,
            params: self
                .values
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        TensorRecord {
                            shape: v.shape().to_vec(),
                            data: v.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    fn from_snapshot(file: SnapshotFile) -> Result<Self, NnError> {
        if file.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(NnError::Format(format!(
                "unsupported parameter format version {}",
                file.format_version
            )));
        }
        let mut set = ParameterSet::new();
        for (name, rec) in file.params {
            set.insert(name, Tensor::new(rec.shape, rec.data)?);
        }
        Ok(set)
    }
}

/// Glorot-uniform matrix of shape `fan_in × fan_out`.
pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("sizes agree")
}

pub fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("sizes agree")
}
