//! 1D convolution and transposed convolution with reverse-mode gradients.
//!
//! "Convolution" is cross-correlation (no kernel flip), the convention of the
//! deep-learning frameworks this numeric core mirrors.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor3;
use super::NnError;

/// 1D convolution. Kernels are `(out_ch, in_ch, k)` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub label: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(skip)]
    pub grad_weight: Vec<f64>,
    #[serde(skip)]
    pub grad_bias: Vec<f64>,
    #[serde(skip)]
    cache: Option<Tensor3>,
}

impl Conv1d {
    pub fn new(label: &str, in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(k >= 1 && stride >= 1);
        Self {
            label: label.to_string(),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            weight: vec![0.0; out_ch * in_ch * k],
            bias: vec![0.0; out_ch],
            grad_weight: vec![0.0; out_ch * in_ch * k],
            grad_bias: vec![0.0; out_ch],
            cache: None,
        }
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize, j: usize) -> f64 {
        self.weight[(oc * self.in_ch + ic) * self.k + j]
    }

    /// `floor((l_in + 2*pad - k) / stride) + 1`, rejected when < 1.
    pub fn out_len(&self, l_in: usize) -> Result<usize, NnError> {
        let padded = l_in + 2 * self.pad;
        if padded < self.k {
            return Err(NnError::Shape {
                layer: self.label.clone(),
                detail: format!("input length {l_in} too short for kernel {}", self.k),
            });
        }
        Ok((padded - self.k) / self.stride + 1)
    }

    fn apply(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let (batch, in_ch, l_in) = x.shape();
        if in_ch != self.in_ch {
            return Err(NnError::Shape {
                layer: self.label.clone(),
                detail: format!("expected {} input channels, got {in_ch}", self.in_ch),
            });
        }
        let l_out = self.out_len(l_in)?;
        let mut y = Tensor3::zeros(batch, self.out_ch, l_out);
        for b in 0..batch {
            for oc in 0..self.out_ch {
                for ol in 0..l_out {
                    let mut acc = self.bias[oc];
                    let base = ol * self.stride;
                    for ic in 0..self.in_ch {
                        let row = x.row(b, ic);
                        for j in 0..self.k {
                            let i = base + j;
                            if i >= self.pad && i - self.pad < l_in {
                                acc += self.w(oc, ic, j) * row[i - self.pad];
                            }
                        }
                    }
                    *y.at_mut(b, oc, ol) = acc;
                }
            }
        }
        Ok(y)
    }

    /// Training-mode forward: records the input for [`Conv1d::backward`].
    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let y = self.apply(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    /// Pure inference forward (no record).
    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        self.apply(x)
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let x = self.cache.take().ok_or_else(|| NnError::MissingForwardRecord {
            layer: self.label.clone(),
        })?;
        let (batch, _, l_in) = x.shape();
        let (_, _, l_out) = dy.shape();
        let mut dx = Tensor3::zeros(batch, self.in_ch, l_in);
        for b in 0..batch {
            for oc in 0..self.out_ch {
                let dy_row = dy.row(b, oc);
                for ol in 0..l_out {
                    let g = dy_row[ol];
                    self.grad_bias[oc] += g;
                    let base = ol * self.stride;
                    for ic in 0..self.in_ch {
                        for j in 0..self.k {
                            let i = base + j;
                            if i >= self.pad && i - self.pad < l_in {
                                self.grad_weight[(oc * self.in_ch + ic) * self.k + j] +=
                                    g * x.at(b, ic, i - self.pad);
                                *dx.at_mut(b, ic, i - self.pad) += g * self.w(oc, ic, j);
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Transposed 1D convolution (scatter / gradient-of-convolution semantics).
/// Kernels are `(in_ch, out_ch, k)` row-major, so a transposed convolution
/// sharing its kernel buffer with a convolution of swapped channel counts is
/// exactly that convolution's adjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvTranspose1d {
    pub label: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub out_pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(skip)]
    pub grad_weight: Vec<f64>,
    #[serde(skip)]
    pub grad_bias: Vec<f64>,
    #[serde(skip)]
    cache: Option<Tensor3>,
}

impl ConvTranspose1d {
    pub fn new(label: &str, in_ch: usize, out_ch: usize, k: usize, stride: usize, out_pad: usize) -> Self {
        assert!(k >= 1 && stride >= 1);
        assert!(out_pad < stride || out_pad == 0, "output padding must be < stride");
        Self {
            label: label.to_string(),
            in_ch,
            out_ch,
            k,
            stride,
            out_pad,
            weight: vec![0.0; in_ch * out_ch * k],
            bias: vec![0.0; out_ch],
            grad_weight: vec![0.0; in_ch * out_ch * k],
            grad_bias: vec![0.0; out_ch],
            cache: None,
        }
    }

    #[inline]
    fn w(&self, ic: usize, oc: usize, j: usize) -> f64 {
        self.weight[(ic * self.out_ch + oc) * self.k + j]
    }

    /// `(l_in - 1) * stride + k + out_pad`.
    pub fn out_len(&self, l_in: usize) -> Result<usize, NnError> {
        if l_in == 0 {
            return Err(NnError::Shape {
                layer: self.label.clone(),
                detail: "empty input".into(),
            });
        }
        Ok((l_in - 1) * self.stride + self.k + self.out_pad)
    }

    fn apply(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let (batch, in_ch, l_in) = x.shape();
        if in_ch != self.in_ch {
            return Err(NnError::Shape {
                layer: self.label.clone(),
                detail: format!("expected {} input channels, got {in_ch}", self.in_ch),
            });
        }
        let l_out = self.out_len(l_in)?;
        let mut y = Tensor3::zeros(batch, self.out_ch, l_out);
        for b in 0..batch {
            for oc in 0..self.out_ch {
                for l in 0..l_out {
                    *y.at_mut(b, oc, l) = self.bias[oc];
                }
            }
            for ic in 0..self.in_ch {
                let row = x.row(b, ic);
                for il in 0..l_in {
                    let v = row[il];
                    let base = il * self.stride;
                    for oc in 0..self.out_ch {
                        for j in 0..self.k {
                            *y.at_mut(b, oc, base + j) += v * self.w(ic, oc, j);
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3, NnError> {
        let y = self.apply(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3, NnError> {
        self.apply(x)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let x = self.cache.take().ok_or_else(|| NnError::MissingForwardRecord {
            layer: self.label.clone(),
        })?;
        let (batch, _, l_in) = x.shape();
        let mut dx = Tensor3::zeros(batch, self.in_ch, l_in);
        for b in 0..batch {
            for oc in 0..self.out_ch {
                let dy_row = dy.row(b, oc);
                self.grad_bias[oc] += dy_row.iter().sum::<f64>();
            }
            for ic in 0..self.in_ch {
                let x_row = x.row(b, ic);
                for il in 0..l_in {
                    let base = il * self.stride;
                    let mut acc = 0.0;
                    for oc in 0..self.out_ch {
                        let dy_row = dy.row(b, oc);
                        for j in 0..self.k {
                            let g = dy_row[base + j];
                            acc += g * self.w(ic, oc, j);
                            self.grad_weight[(ic * self.out_ch + oc) * self.k + j] += g * x_row[il];
                        }
                    }
                    *dx.at_mut(b, ic, il) += acc;
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::tensor::dot;
    use crate::rng::substream;
    use rand::Rng;

    fn randomize(buf: &mut [f64], rng: &mut impl Rng) {
        for v in buf.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }

    /// Independent triple-loop cross-correlation used as the test oracle.
    fn naive_conv(x: &Tensor3, w: &[f64], bias: &[f64], in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Tensor3 {
        let (batch, _, l_in) = x.shape();
        let l_out = (l_in + 2 * pad - k) / stride + 1;
        let mut y = Tensor3::zeros(batch, out_ch, l_out);
        for b in 0..batch {
            for oc in 0..out_ch {
                for ol in 0..l_out {
                    let mut acc = bias[oc];
                    for ic in 0..in_ch {
                        for j in 0..k {
                            let i = (ol * stride + j) as isize - pad as isize;
                            if i >= 0 && (i as usize) < l_in {
                                acc += w[(oc * in_ch + ic) * k + j] * x.at(b, ic, i as usize);
                            }
                        }
                    }
                    *y.at_mut(b, oc, ol) = acc;
                }
            }
        }
        y
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut conv = Conv1d::new("id", 1, 1, 1, 1, 0);
        conv.weight[0] = 1.0;
        let mut rng = substream(1, "conv.id");
        let mut x = Tensor3::zeros(2, 1, 7);
        randomize(x.values_mut(), &mut rng);
        let y = conv.infer(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn appendix_first_layer_shape() {
        // k=4, stride=2, pad=1 on length 24 -> 12
        let conv = Conv1d::new("c1", 4, 8, 4, 2, 1);
        assert_eq!(conv.out_len(24).unwrap(), 12);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let conv = Conv1d::new("c", 1, 1, 5, 1, 0);
        let err = conv.out_len(3).unwrap_err();
        assert!(err.to_string().contains("c"));
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = substream(2, "conv.naive");
        for &(in_ch, out_ch, k, stride, pad, l_in) in
            &[(1, 1, 2, 1, 0, 5), (2, 3, 4, 2, 1, 9), (3, 2, 3, 2, 0, 8), (4, 8, 4, 2, 1, 24)]
        {
            let mut conv = Conv1d::new("t", in_ch, out_ch, k, stride, pad);
            randomize(&mut conv.weight, &mut rng);
            randomize(&mut conv.bias, &mut rng);
            let mut x = Tensor3::zeros(2, in_ch, l_in);
            randomize(x.values_mut(), &mut rng);
            let got = conv.infer(&x).unwrap();
            let want = naive_conv(&x, &conv.weight, &conv.bias, in_ch, out_ch, k, stride, pad);
            for (a, b) in got.values().iter().zip(want.values()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transpose_identity_kernel() {
        let mut t = ConvTranspose1d::new("id", 1, 1, 1, 1, 0);
        t.weight[0] = 1.0;
        let mut rng = substream(3, "convt.id");
        let mut x = Tensor3::zeros(1, 1, 6);
        randomize(x.values_mut(), &mut rng);
        let y = t.infer(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn transpose_shape_formula() {
        // L_in=3, k=5, stride=2, out_pad=1 -> 10
        let t = ConvTranspose1d::new("t", 1, 1, 5, 2, 1);
        assert_eq!(t.out_len(3).unwrap(), 10);
        // decoder trace steps
        assert_eq!(ConvTranspose1d::new("t", 1, 1, 4, 2, 1).out_len(10).unwrap(), 23);
        assert_eq!(ConvTranspose1d::new("t", 1, 1, 2, 1, 0).out_len(23).unwrap(), 24);
    }

    #[test]
    fn adjoint_pairing_with_shared_kernel() {
        // <conv(x), y> == <x, convT(y)> for a shared kernel buffer and zero bias.
        let mut rng = substream(4, "conv.adjoint");
        for &(in_ch, out_ch, k, stride, l_in) in
            &[(1, 1, 3, 1, 8), (2, 3, 4, 2, 24), (3, 2, 5, 2, 11), (2, 2, 2, 1, 4)]
        {
            let mut conv = Conv1d::new("a", in_ch, out_ch, k, stride, 0);
            randomize(&mut conv.weight, &mut rng);
            let l_out = conv.out_len(l_in).unwrap();
            // adjoint maps (out_ch, l_out) back to (in_ch, l_in); same raw buffer
            let mut tconv = ConvTranspose1d::new("aT", out_ch, in_ch, k, stride, l_in - ((l_out - 1) * stride + k));
            tconv.weight.copy_from_slice(&conv.weight);

            let mut x = Tensor3::zeros(2, in_ch, l_in);
            let mut y = Tensor3::zeros(2, out_ch, l_out);
            randomize(x.values_mut(), &mut rng);
            randomize(y.values_mut(), &mut rng);

            let cx = conv.infer(&x).unwrap();
            let ty = tconv.infer(&y).unwrap();
            // out_pad may leave trailing zeros; dot over the padded length is fine
            let lhs = dot(&cx, &y);
            let rhs = dot(&x, &ty);
            assert!((lhs - rhs).abs() < 1e-8, "lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut conv = Conv1d::new("nofwd", 1, 1, 1, 1, 0);
        let dy = Tensor3::zeros(1, 1, 4);
        assert!(matches!(conv.backward(&dy), Err(NnError::MissingForwardRecord { .. })));
    }
}
