//! Batch normalization over `(batch, length)` per channel.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor3;
use super::NnError;

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor3,
    inv_std: Vec<f64>,
}

/// 1D batch normalization. Train mode standardizes with batch statistics and
/// updates running statistics (running variance stored unbiased); eval mode
/// standardizes with the running statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub label: String,
    pub ch: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    #[serde(skip)]
    pub grad_gamma: Vec<f64>,
    #[serde(skip)]
    pub grad_beta: Vec<f64>,
    #[serde(skip)]
    cache: Option<BnCache>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl BatchNorm1d {
    pub fn new(label: &str, ch: usize) -> Self {
        Self {
            label: label.to_string(),
            ch,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            grad_gamma: vec![0.0; ch],
            grad_beta: vec![0.0; ch],
            cache: None,
        }
    }

    fn check_channels(&self, x: &Tensor3) -> Result<(), NnError> {
        if x.channels() != self.ch {
            return Err(NnError::Shape {
                layer: self.label.clone(),
                detail: format!("expected {} channels, got {}", self.ch, x.channels()),
            });
        }
        Ok(())
    }

    /// Training forward: batch statistics, running-stat update, cache for backward.
    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3, NnError> {
        self.check_channels(x)?;
        let (batch, _, len) = x.shape();
        if batch < 2 {
            return Err(NnError::BatchTooSmall { layer: self.label.clone(), batch });
        }
        let n = (batch * len) as f64;
        let mut y = Tensor3::zeros(batch, self.ch, len);
        let mut xhat = Tensor3::zeros(batch, self.ch, len);
        let mut inv_std = vec![0.0; self.ch];
        for c in 0..self.ch {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for b in 0..batch {
                for v in x.row(b, c) {
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sumsq / n - mean * mean).max(0.0);
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = istd;
            for b in 0..batch {
                for l in 0..len {
                    let h = (x.at(b, c, l) - mean) * istd;
                    *xhat.at_mut(b, c, l) = h;
                    *y.at_mut(b, c, l) = self.gamma[c] * h + self.beta[c];
                }
            }
            let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(y)
    }

    /// Eval forward: running statistics, deterministic and batch-size independent.
    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        self.check_channels(x)?;
        let (batch, _, len) = x.shape();
        let mut y = Tensor3::zeros(batch, self.ch, len);
        for c in 0..self.ch {
            let istd = 1.0 / (self.running_var[c] + self.eps).sqrt();
            for b in 0..batch {
                for l in 0..len {
                    *y.at_mut(b, c, l) =
                        self.gamma[c] * (x.at(b, c, l) - self.running_mean[c]) * istd + self.beta[c];
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let BnCache { xhat, inv_std } = self.cache.take().ok_or_else(|| NnError::MissingForwardRecord {
            layer: self.label.clone(),
        })?;
        let (batch, _, len) = dy.shape();
        let n = (batch * len) as f64;
        let mut dx = Tensor3::zeros(batch, self.ch, len);
        for c in 0..self.ch {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..batch {
                for l in 0..len {
                    let g = dy.at(b, c, l);
                    sum_dy += g;
                    sum_dy_xhat += g * xhat.at(b, c, l);
                }
            }
            self.grad_beta[c] += sum_dy;
            self.grad_gamma[c] += sum_dy_xhat;
            let scale = self.gamma[c] * inv_std[c] / n;
            for b in 0..batch {
                for l in 0..len {
                    let g = dy.at(b, c, l);
                    *dx.at_mut(b, c, l) = scale * (n * g - sum_dy - xhat.at(b, c, l) * sum_dy_xhat);
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_input(batch: usize, ch: usize, len: usize, seed: u64) -> Tensor3 {
        let mut rng = substream(seed, "bn.test");
        let mut x = Tensor3::zeros(batch, ch, len);
        for v in x.values_mut() {
            *v = rng.gen_range(-2.0..3.0);
        }
        x
    }

    #[test]
    fn train_output_is_standardized_per_channel() {
        let mut bn = BatchNorm1d::new("bn", 3);
        let x = random_input(4, 3, 6, 11);
        let y = bn.forward(&x).unwrap();
        let (batch, _, len) = y.shape();
        let n = (batch * len) as f64;
        for c in 0..3 {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for b in 0..batch {
                for l in 0..len {
                    sum += y.at(b, c, l);
                    sumsq += y.at(b, c, l).powi(2);
                }
            }
            let mean = sum / n;
            let var = sumsq / n - mean * mean;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4, "var={var}");
        }
    }

    #[test]
    fn standardized_input_is_fixed_point() {
        let mut bn = BatchNorm1d::new("bn", 1);
        let x = random_input(8, 1, 4, 12);
        let y1 = bn.forward(&x).unwrap();
        let mut bn2 = BatchNorm1d::new("bn2", 1);
        let y2 = bn2.forward(&y1).unwrap();
        for (a, b) in y1.values().iter().zip(y2.values()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let mut bn = BatchNorm1d::new("bn", 2);
        let x = random_input(1, 2, 5, 13);
        assert!(matches!(bn.forward(&x), Err(NnError::BatchTooSmall { .. })));
    }

    #[test]
    fn eval_is_batch_size_independent() {
        let mut bn = BatchNorm1d::new("bn", 2);
        // drive running stats with a few training batches, then freeze
        for s in 0..5 {
            let x = random_input(8, 2, 6, 20 + s);
            bn.forward(&x).unwrap();
        }
        let big = random_input(8, 2, 6, 30);
        let full = bn.infer(&big).unwrap();
        for b in 0..8 {
            let mut single = Tensor3::zeros(1, 2, 6);
            for c in 0..2 {
                for l in 0..6 {
                    *single.at_mut(0, c, l) = big.at(b, c, l);
                }
            }
            let one = bn.infer(&single).unwrap();
            for c in 0..2 {
                for l in 0..6 {
                    assert_eq!(one.at(0, c, l), full.at(b, c, l));
                }
            }
        }
    }
}
