use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A flat buffer of weights plus its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor<T> {
    values: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> WeightTensor<T> {
    /// Builds a tensor, checking that the shape covers the values and every value is finite.
    pub fn new(values: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::BadShape(format!("{shape:?}")));
        }
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::LengthMismatch { expected: count, actual: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, shape })
    }

    /// One-dimensional tensor.
    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let n = values.len();
        Self::new(values, vec![n])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Same shape, new values. Values are re-validated.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(values, self.shape.clone())
    }

    /// Elementwise `a * w + c`.
    pub fn affine(&self, scale: T, offset: T) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| scale * v + offset).collect())
    }
}
