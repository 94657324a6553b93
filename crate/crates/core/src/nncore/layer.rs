//! Layer composition: activations, the layer enum, and sequential stacks.

use serde::{Deserialize, Serialize};

use super::batchnorm::BatchNorm1d;
use super::conv::{Conv1d, ConvTranspose1d};
use super::tensor::Tensor3;
use super::NnError;

/// Elementwise `max(x, slope * x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakyRelu {
    pub slope: f64,
    #[serde(skip)]
    cache: Option<Tensor3>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    pub fn infer(&self, x: &Tensor3) -> Tensor3 {
        let s = self.slope;
        x.map(|v| if v >= 0.0 { v } else { s * v })
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let x = self.cache.take().ok_or_else(|| NnError::MissingForwardRecord {
            layer: "leaky_relu".into(),
        })?;
        let mut dx = dy.clone();
        for (g, v) in dx.values_mut().iter_mut().zip(x.values()) {
            if *v < 0.0 {
                *g *= self.slope;
            }
        }
        Ok(dx)
    }
}

/// `relu(x) = leaky_relu(x, 0)`.
pub fn relu(x: &Tensor3) -> Tensor3 {
    LeakyRelu::new(0.0).infer(x)
}

pub fn leaky_relu(x: &Tensor3, slope: f64) -> Tensor3 {
    LeakyRelu::new(slope).infer(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv1d),
    ConvT(ConvTranspose1d),
    Bn(BatchNorm1d),
    LeakyRelu(LeakyRelu),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3, NnError> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::ConvT(l) => l.forward(x),
            Layer::Bn(l) => l.forward(x),
            Layer::LeakyRelu(l) => Ok(l.forward(x)),
        }
    }

    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::ConvT(l) => l.infer(x),
            Layer::Bn(l) => l.infer(x),
            Layer::LeakyRelu(l) => Ok(l.infer(x)),
        }
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::ConvT(l) => l.backward(dy),
            Layer::Bn(l) => l.backward(dy),
            Layer::LeakyRelu(l) => l.backward(dy),
        }
    }

    /// Trainable parameter slices in a fixed order (weights before biases,
    /// scale before shift). Running statistics are not trainable.
    fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::ConvT(l) => vec![&l.weight, &l.bias],
            Layer::Bn(l) => vec![&l.gamma, &l.beta],
            Layer::LeakyRelu(_) => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvT(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Bn(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::LeakyRelu(_) => vec![],
        }
    }

    fn grads(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::ConvT(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::Bn(l) => vec![&l.grad_gamma, &l.grad_beta],
            Layer::LeakyRelu(_) => vec![],
        }
    }

    fn grads_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv(l) => vec![&mut l.grad_weight, &mut l.grad_bias],
            Layer::ConvT(l) => vec![&mut l.grad_weight, &mut l.grad_bias],
            Layer::Bn(l) => vec![&mut l.grad_gamma, &mut l.grad_beta],
            Layer::LeakyRelu(_) => vec![],
        }
    }

    /// Re-create gradient buffers after deserialization (serde skips them).
    pub fn reset_grads(&mut self) {
        match self {
            Layer::Conv(l) => {
                l.grad_weight = vec![0.0; l.weight.len()];
                l.grad_bias = vec![0.0; l.bias.len()];
            }
            Layer::ConvT(l) => {
                l.grad_weight = vec![0.0; l.weight.len()];
                l.grad_bias = vec![0.0; l.bias.len()];
            }
            Layer::Bn(l) => {
                l.grad_gamma = vec![0.0; l.gamma.len()];
                l.grad_beta = vec![0.0; l.beta.len()];
            }
            Layer::LeakyRelu(_) => {}
        }
    }
}

/// An ordered stack of layers with flat parameter/gradient views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Reverse sweep; requires a matching prior `forward`.
    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(|l| l.params().iter().map(|s| s.len()).sum::<usize>()).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            for slice in layer.params() {
                out.extend_from_slice(slice);
            }
        }
    }

    pub fn read_params(&mut self, mut src: &[f64]) {
        for layer in &mut self.layers {
            for slot in layer.params_mut() {
                let (head, rest) = src.split_at(slot.len());
                slot.copy_from_slice(head);
                src = rest;
            }
        }
        assert!(src.is_empty(), "parameter vector length mismatch");
    }

    pub fn write_grads(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            for slice in layer.grads() {
                out.extend_from_slice(slice);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for slot in layer.grads_mut() {
                slot.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn reset_grads(&mut self) {
        for layer in &mut self.layers {
            layer.reset_grads();
        }
    }
}
