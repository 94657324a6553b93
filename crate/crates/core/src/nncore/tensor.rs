//! Dense rank-3 tensors in `(batch, channels, length)` layout.

use serde::{Deserialize, Serialize};

/// A dense `(batch, channels, length)` tensor of `f64`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self { batch, channels, len, data: vec![0.0; batch * channels * len] }
    }

    /// Wrap a row-major value buffer. Panics if the length does not match the
    /// shape; shapes are internal bookkeeping, not user input.
    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), batch * channels * len, "tensor shape/data mismatch");
        Self { batch, channels, len, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, l: usize) -> f64 {
        self.data[(b * self.channels + c) * self.len + l]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, l: usize) -> &mut f64 {
        &mut self.data[(b * self.channels + c) * self.len + l]
    }

    /// Row-major view of one sample's channel.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Index of the first sample containing a non-finite entry, if any.
    pub fn first_non_finite_sample(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| i / (self.channels * self.len))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            batch: self.batch,
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Flat inner product of two equally shaped tensors.
pub fn dot(a: &Tensor3, b: &Tensor3) -> f64 {
    assert_eq!(a.shape(), b.shape(), "dot on mismatched shapes");
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
}
