//! Latent codes: single mapper outputs and per-slot style matrices.

use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// One style vector, the output of the mapping network.
#[derive(Clone, Debug, PartialEq)]
pub struct MapperLatent(Vec<f64>);

impl MapperLatent {
    pub fn new(values: Vec<f64>) -> Self {
        MapperLatent(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Repeats the vector on every one of `slots` style rows.
    pub fn broadcast(&self, slots: usize) -> StyleLatent {
        let mut data = Vec::with_capacity(slots * self.0.len());
        for _ in 0..slots {
            data.extend_from_slice(&self.0);
        }
        StyleLatent::from_vec(slots, self.0.len(), data).expect("broadcast shape")
    }
}

/// A per-slot style matrix (`slots x dim`). Residuals share this type.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleLatent {
    tensor: Tensor,
}

impl StyleLatent {
    pub fn zeros(slots: usize, dim: usize) -> Self {
        StyleLatent {
            tensor: Tensor::zeros(&[slots, dim]),
        }
    }

    pub fn from_vec(slots: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Ok(StyleLatent {
            tensor: Tensor::from_vec(&[slots, dim], data)?,
        })
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        if tensor.dims().len() != 2 {
            return Err(dim_err("StyleLatent", "[slots, dim]", tensor.dims()));
        }
        Ok(StyleLatent { tensor })
    }

    pub fn slots(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.tensor.dims()[1]
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        let d = self.dim();
        &self.tensor.data()[slot * d..(slot + 1) * d]
    }

    pub fn row_mut(&mut self, slot: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.tensor.data_mut()[slot * d..(slot + 1) * d]
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn check_same_shape(&self, other: &StyleLatent) -> Result<()> {
        if self.tensor.dims() != other.tensor.dims() {
            return Err(dim_err("StyleLatent shape", self.tensor.dims(), other.tensor.dims()));
        }
        Ok(())
    }

    pub fn add(&self, other: &StyleLatent) -> Result<StyleLatent> {
        self.check_same_shape(other)?;
        let mut t = self.tensor.clone();
        t.add_assign(&other.tensor);
        Ok(StyleLatent { tensor: t })
    }

    pub fn sub(&self, other: &StyleLatent) -> Result<StyleLatent> {
        self.check_same_shape(other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        StyleLatent::from_vec(self.slots(), self.dim(), data)
    }

    pub fn scaled(&self, s: f64) -> StyleLatent {
        StyleLatent {
            tensor: self.tensor.map(|v| v * s),
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.tensor.sum_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.tensor.is_finite()
    }
}
