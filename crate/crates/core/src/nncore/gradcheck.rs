//! Finite-difference checks of the reverse-mode gradients.

use super::*;
use crate::rng::substream;
use rand::Rng;

const FD_STEP: f64 = 1e-4;

fn randomize(buf: &mut [f64], rng: &mut impl Rng) {
    for v in buf.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
}

/// loss = 0.5 * sum(y^2) after a train-mode forward pass.
fn loss_of(seq: &Sequential, params: &[f64], x: &Tensor3) -> f64 {
    let mut probe = seq.clone();
    probe.read_params(params);
    let y = probe.forward(x).unwrap();
    0.5 * y.values().iter().map(|v| v * v).sum::<f64>()
}

/// Max relative error between analytic and central-difference gradients,
/// for parameters and for the input. Indices where two step sizes disagree
/// are kink crossings of an activation: the difference quotient is invalid
/// there and the index is skipped (crossings must stay rare).
fn max_rel_err(seq: &Sequential, x: &Tensor3) -> f64 {
    let mut params = Vec::new();
    seq.write_params(&mut params);

    // analytic
    let mut work = seq.clone();
    work.zero_grads();
    let y = work.forward(x).unwrap();
    let dy = y.clone();
    let dx = work.backward(&dy).unwrap();
    let mut analytic = Vec::new();
    work.write_grads(&mut analytic);

    let mut worst: f64 = 0.0;
    let mut skipped = 0usize;
    let mut check = |a: f64, fd1: f64, fd2: f64| {
        let denom = fd1.abs().max(fd2.abs()).max(1e-3);
        if (fd1 - fd2).abs() / denom > 1e-4 {
            skipped += 1;
            return;
        }
        let denom = a.abs().max(fd2.abs()).max(1e-3);
        worst = worst.max((a - fd2).abs() / denom);
    };
    for i in 0..params.len() {
        let central = |h: f64| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            (loss_of(seq, &plus, x) - loss_of(seq, &minus, x)) / (2.0 * h)
        };
        check(analytic[i], central(FD_STEP), central(FD_STEP / 2.0));
    }
    for i in 0..x.values().len() {
        let central = |h: f64| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.values_mut()[i] += h;
            xm.values_mut()[i] -= h;
            (loss_of(seq, &params, &xp) - loss_of(seq, &params, &xm)) / (2.0 * h)
        };
        check(dx.values()[i], central(FD_STEP), central(FD_STEP / 2.0));
    }
    let total = params.len() + x.values().len();
    assert!(skipped * 20 < total, "{skipped} kink crossings of {total} probes");
    worst
}

fn random_stack(layers: Vec<Layer>, seed: u64) -> Sequential {
    let mut seq = Sequential::new(layers);
    let mut rng = substream(seed, "gradcheck.params");
    let n = seq.param_len();
    let mut params = vec![0.0; n];
    randomize(&mut params, &mut rng);
    seq.read_params(&params);
    seq
}

fn random_input(batch: usize, ch: usize, len: usize, seed: u64) -> Tensor3 {
    let mut rng = substream(seed, "gradcheck.input");
    let mut x = Tensor3::zeros(batch, ch, len);
    randomize(x.values_mut(), &mut rng);
    x
}

#[test]
fn conv_gradients_match_finite_differences() {
    let seq = random_stack(vec![Layer::Conv(Conv1d::new("c", 2, 3, 4, 2, 1))], 1);
    let x = random_input(3, 2, 10, 2);
    assert!(max_rel_err(&seq, &x) < 1e-4);
}

#[test]
fn conv_transpose_gradients_match_finite_differences() {
    let seq = random_stack(vec![Layer::ConvT(ConvTranspose1d::new("t", 3, 2, 5, 2, 1))], 3);
    let x = random_input(2, 3, 4, 4);
    assert!(max_rel_err(&seq, &x) < 1e-4);
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    let seq = random_stack(vec![Layer::Bn(BatchNorm1d::new("b", 3))], 5);
    let x = random_input(4, 3, 5, 6);
    assert!(max_rel_err(&seq, &x) < 1e-4);
}

#[test]
fn leaky_relu_gradients_match_finite_differences() {
    let seq = random_stack(vec![Layer::LeakyRelu(LeakyRelu::new(0.2))], 7);
    let x = random_input(2, 2, 6, 8);
    assert!(max_rel_err(&seq, &x) < 1e-4);
}

#[test]
fn three_layer_stack_gradients_match_finite_differences() {
    let seq = random_stack(
        vec![
            Layer::Conv(Conv1d::new("c1", 2, 4, 4, 2, 1)),
            Layer::Bn(BatchNorm1d::new("b1", 4)),
            Layer::LeakyRelu(LeakyRelu::new(0.2)),
        ],
        9,
    );
    let x = random_input(4, 2, 12, 10);
    assert!(max_rel_err(&seq, &x) < 1e-4);
}

#[test]
fn constant_loss_gives_zero_gradients() {
    let mut seq = random_stack(vec![Layer::Conv(Conv1d::new("c", 1, 2, 3, 1, 0))], 11);
    let x = random_input(2, 1, 8, 12);
    seq.zero_grads();
    let y = seq.forward(&x).unwrap();
    let (b, c, l) = y.shape();
    let dx = seq.backward(&Tensor3::zeros(b, c, l)).unwrap();
    let mut grads = Vec::new();
    seq.write_grads(&mut grads);
    assert!(grads.iter().all(|g| *g == 0.0));
    assert!(dx.values().iter().all(|g| *g == 0.0));
}

#[test]
fn linear_layer_l2_loss_matches_hand_gradient() {
    // y_hat = w * x (k=1 conv), L = sum (y_hat - y)^2  =>  dL/dw = sum 2 (y_hat - y) x
    let mut conv = Conv1d::new("lin", 1, 1, 1, 1, 0);
    conv.weight[0] = 0.7;
    let x = random_input(1, 1, 6, 13);
    let y = random_input(1, 1, 6, 14);
    let mut seq = Sequential::new(vec![Layer::Conv(conv)]);
    seq.zero_grads();
    let y_hat = seq.forward(&x).unwrap();
    let mut dy = y_hat.clone();
    for (g, t) in dy.values_mut().iter_mut().zip(y.values()) {
        *g = 2.0 * (*g - t);
    }
    seq.backward(&dy).unwrap();
    let mut grads = Vec::new();
    seq.write_grads(&mut grads);
    let want: f64 = x
        .values()
        .iter()
        .zip(y_hat.values().iter().zip(y.values()))
        .map(|(xv, (yh, yv))| 2.0 * (yh - yv) * xv)
        .sum();
    assert!((grads[0] - want).abs() < 1e-10);
}
