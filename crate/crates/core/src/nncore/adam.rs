//! Bias-corrected Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    /// One in-place update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
        assert_eq!(params.len(), self.m.len(), "optimizer state length mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_from_zero_state() {
        // t=1: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps)
        let lr = 1e-3;
        let mut adam = AdamState::new(2, lr);
        let g = [0.5, -0.02];
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &g);
        for i in 0..2 {
            let want = -lr * g[i] / (g[i].abs() + ADAM_EPS);
            assert!((p[i] - want).abs() < 1e-15, "{} vs {}", p[i], want);
        }
    }

    #[test]
    fn constant_gradient_update_tends_to_lr_times_sign() {
        let lr = 1e-3;
        let mut adam = AdamState::new(1, lr);
        let g = [0.3];
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for step in 0..200 {
            adam.step(&mut p, &g);
            let delta = p[0] - prev;
            prev = p[0];
            if step > 50 {
                assert!((delta.abs() - lr).abs() < 1e-6 * lr, "delta={delta}");
                assert!(delta < 0.0);
            }
        }
    }
}
