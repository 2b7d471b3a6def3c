use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; the tensor is marked trainable.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(tensor.with_grad());
        Ok(ParamId(self.tensors.len() - 1))
    }

    /// Glorot-uniform `rows x cols` matrix.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Copies values from `other` for every parameter present in both stores.
    /// Shapes must agree.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for (name, src) in other.iter() {
            if let Some(id) = self.find(name) {
                let dst = &mut self.tensors[id.0];
                if dst.shape() != src.shape() {
                    return Err(Error::Dimension(format!(
                        "parameter `{name}`: checkpoint shape {:?} vs model shape {:?}",
                        src.shape(),
                        dst.shape()
                    )));
                }
                dst.data_mut().copy_from_slice(src.data());
                copied += 1;
            }
        }
        Ok(copied)
    }
}
