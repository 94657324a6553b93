//! Convolutional (conditional) variational auto-encoder over daily
//! trajectories.
//!
//! A trajectory is treated as a one-dimensional image: hours are pixels,
//! the two coordinates are channels, and the periodic day-of-year covariate
//! joins as two further channels replicated along the length. The encoder
//! maps it to a diagonal Gaussian `(mu, gamma^2)` in `d_z` dimensions; the
//! decoder maps a latent point (and covariate) back to a trajectory mean.
//! Training maximizes the evidence lower bound with the reparameterization
//! trick and Adam.

mod checkpoint;
mod diagnostics;
mod grid;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use diagnostics::{dim_diagnostics, dim_sweep, DimDiagnostics, DimStats, ModelVariant, SweepEntry};
pub use grid::{decode_grid, GridRow, GridSpec};
pub use train::{train, EpochStats, TrainOutput, TrainTrace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::{BatchNorm1d, Conv1d, ConvTranspose1d, Layer, LeakyRelu, NnError, Sequential, Tensor3};
use crate::trajdata::{Covariate, FleetDataset, Trajectory};

/// Length the latent/covariate channels are replicated to at the decoder
/// input; the transposed-convolution chain expands 4 -> 3 -> 10 -> 23 -> 24.
pub const DECODER_SEED_LEN: usize = 4;

/// Variances are clamped through log-variance to `[1e-8, 1e4]`.
pub const LOGVAR_MIN: f64 = -18.420680743952367; // ln(1e-8)
pub const LOGVAR_MAX: f64 = 9.210340371976184; // ln(1e4)

#[derive(Debug, Error)]
pub enum CvaeError {
    #[error("the built-in layer traces require H=24 and D=2 (got H={h}, D={d}); an explicit trace override is required for other shapes")]
    UnsupportedTrace { h: usize, d: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("dataset must be normalized before use")]
    DataNotNormalized,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite values at {site} (sample {sample})")]
    NonFinite { site: String, sample: usize },
    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    Diverged { epoch: usize, loss: f64, trace: TrainTrace },
    #[error("operation requires a conditional model")]
    NotConditional,
    #[error("operation requires d_z >= 2 (got {d_z})")]
    NeedsTwoDims { d_z: usize },
    #[error("need at least 2 embeddings, got {n}")]
    TooFewEmbeddings { n: usize },
    #[error("latent dimension mismatch: expected {expected}, got {got}")]
    LatentDimMismatch { expected: usize, got: usize },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
}

/// Model and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_z: usize,
    /// Condition encoder and decoder on the day-of-year covariate.
    pub conditional: bool,
    /// Fixed observation variance; weights regularization against
    /// reconstruction. 1.0 makes the reconstruction term the L2 loss.
    pub sigma2: f64,
    pub h: usize,
    pub d: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_z: 3,
            conditional: true,
            sigma2: 1.0,
            h: 24,
            d: 2,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 1000,
            seed: 0,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<(), CvaeError> {
        if self.d_z < 1 {
            return Err(CvaeError::InvalidConfig("d_z must be >= 1".into()));
        }
        if self.sigma2 <= 0.0 {
            return Err(CvaeError::InvalidConfig("sigma2 must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(CvaeError::InvalidConfig("batch_size must be >= 2".into()));
        }
        if self.h != 24 || self.d != 2 {
            return Err(CvaeError::UnsupportedTrace { h: self.h, d: self.d });
        }
        Ok(())
    }

    /// Covariate channels added to encoder and decoder inputs.
    pub fn cov_channels(&self) -> usize {
        if self.conditional {
            2
        } else {
            0
        }
    }
}

/// Diagonal-Gaussian variational posterior of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mu: Vec<f64>, var: Vec<f64>) -> Result<Self, CvaeError> {
        if mu.len() != var.len() {
            return Err(CvaeError::LatentDimMismatch { expected: mu.len(), got: var.len() });
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) || mu.iter().any(|m| !m.is_finite()) {
            return Err(CvaeError::NonFinite { site: "latent gaussian".into(), sample: 0 });
        }
        Ok(Self { mu, var })
    }

    pub fn d_z(&self) -> usize {
        self.mu.len()
    }
}

/// `z = gamma * eps + mu` with `eps ~ N(0, I)` from a seeded stream.
pub fn reparameterize(q: &LatentGaussian, seed: u64) -> Vec<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = crate::rng::substream(seed, "reparameterize");
    q.mu
        .iter()
        .zip(&q.var)
        .map(|(&m, &v)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * eps
        })
        .collect()
}

/// Closed-form KL divergence of `q` from the standard normal prior:
/// `0.5 * sum_k (var_k + mu_k^2 - log var_k - 1)`.
pub fn kl_term(q: &LatentGaussian) -> f64 {
    0.5 * q
        .mu
        .iter()
        .zip(&q.var)
        .map(|(&m, &v)| v + m * m - v.ln() - 1.0)
        .sum::<f64>()
}

/// Encoder + decoder with a fixed layer trace (24 -> 12 -> 6 -> 2 -> 1 and
/// 4 -> 3 -> 10 -> 23 -> 24).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvaeModel {
    pub cfg: ModelConfig,
    pub encoder: Sequential,
    pub decoder: Sequential,
}

/// Build an initialized model. Weights and biases are drawn uniformly in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from the `init` substream of the
/// config seed; batch-norm starts at identity.
pub fn build_model(cfg: &ModelConfig) -> Result<CvaeModel, CvaeError> {
    use rand::Rng;
    cfg.validate()?;
    let cov = cfg.cov_channels();
    let enc_in = cfg.d + cov;

    let encoder = Sequential::new(vec![
        Layer::Conv(Conv1d::new("enc.conv1", enc_in, 8, 4, 2, 1)),
        Layer::Bn(BatchNorm1d::new("enc.bn1", 8)),
        Layer::LeakyRelu(LeakyRelu::new(0.2)),
        Layer::Conv(Conv1d::new("enc.conv2", 8, 32, 4, 2, 1)),
        Layer::Bn(BatchNorm1d::new("enc.bn2", 32)),
        Layer::LeakyRelu(LeakyRelu::new(0.2)),
        Layer::Conv(Conv1d::new("enc.conv3", 32, 128, 3, 2, 0)),
        Layer::Bn(BatchNorm1d::new("enc.bn3", 128)),
        Layer::LeakyRelu(LeakyRelu::new(0.2)),
        Layer::Conv(Conv1d::new("enc.conv4", 128, 2 * cfg.d_z, 2, 1, 0)),
    ]);

    let dec_in = cfg.d_z + cov;
    let decoder = Sequential::new(vec![
        Layer::Conv(Conv1d::new("dec.conv1", dec_in, 20, 2, 1, 0)),
        Layer::Bn(BatchNorm1d::new("dec.bn1", 20)),
        Layer::LeakyRelu(LeakyRelu::new(0.2)),
        Layer::ConvT(ConvTranspose1d::new("dec.tconv1", 20, 10, 5, 2, 1)),
        Layer::Bn(BatchNorm1d::new("dec.bn2", 10)),
        Layer::LeakyRelu(LeakyRelu::new(0.0)),
        Layer::ConvT(ConvTranspose1d::new("dec.tconv2", 10, 5, 4, 2, 1)),
        Layer::Bn(BatchNorm1d::new("dec.bn3", 5)),
        Layer::LeakyRelu(LeakyRelu::new(0.0)),
        Layer::ConvT(ConvTranspose1d::new("dec.tconv3", 5, 2, 2, 1, 0)),
    ]);

    let mut model = CvaeModel { cfg: cfg.clone(), encoder, decoder };
    let mut rng = crate::rng::substream(cfg.seed, "init");
    for seq in [&mut model.encoder, &mut model.decoder] {
        for layer in &mut seq.layers {
            match layer {
                Layer::Conv(c) => {
                    let bound = 1.0 / ((c.in_ch * c.k) as f64).sqrt();
                    for w in c.weight.iter_mut().chain(c.bias.iter_mut()) {
                        *w = rng.gen_range(-bound..bound);
                    }
                }
                Layer::ConvT(c) => {
                    let bound = 1.0 / ((c.in_ch * c.k) as f64).sqrt();
                    for w in c.weight.iter_mut().chain(c.bias.iter_mut()) {
                        *w = rng.gen_range(-bound..bound);
                    }
                }
                Layer::Bn(_) | Layer::LeakyRelu(_) => {}
            }
        }
    }
    Ok(model)
}

/// One reconstruction pass kept around for loss and gradients.
struct ForwardPass {
    latents: Vec<LatentGaussian>,
    /// Raw (unclamped) log-variance per sample/dim, for the clamp mask.
    logvar_raw: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    y_hat: Tensor3,
    terms: ElboTerms,
}

/// Batch ELBO terms (sums over the batch): `loss = recon + kl`,
/// `recon = 1/(2 sigma^2) sum ||y - y_hat||^2`,
/// `kl = 0.5 sum (var + mu^2 - log var - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

impl CvaeModel {
    pub fn d_z(&self) -> usize {
        self.cfg.d_z
    }

    pub fn param_len(&self) -> usize {
        self.encoder.param_len() + self.decoder.param_len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        self.encoder.write_params(&mut out);
        self.decoder.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n_enc = self.encoder.param_len();
        self.encoder.read_params(&params[..n_enc]);
        self.decoder.read_params(&params[n_enc..]);
    }

    pub fn grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        self.encoder.write_grads(&mut out);
        self.decoder.write_grads(&mut out);
        out
    }

    pub fn zero_grads(&mut self) {
        self.encoder.zero_grads();
        self.decoder.zero_grads();
    }

    fn encoder_input(&self, trajs: &[&Trajectory], covs: &[Covariate]) -> Result<Tensor3, CvaeError> {
        let h = self.cfg.h;
        let mut x = Tensor3::zeros(trajs.len(), self.cfg.d + self.cfg.cov_channels(), h);
        for (b, t) in trajs.iter().enumerate() {
            if t.positions.len() != h {
                return Err(CvaeError::InvalidConfig(format!(
                    "trajectory for vessel {} on {} has {} samples, model expects {h}",
                    t.vessel_id,
                    t.date,
                    t.positions.len()
                )));
            }
            for (l, p) in t.positions.iter().enumerate() {
                *x.at_mut(b, 0, l) = p[0];
                *x.at_mut(b, 1, l) = p[1];
            }
            if self.cfg.conditional {
                for l in 0..h {
                    *x.at_mut(b, 2, l) = covs[b].cos;
                    *x.at_mut(b, 3, l) = covs[b].sin;
                }
            }
        }
        Ok(x)
    }

    fn decoder_input(&self, zs: &[Vec<f64>], covs: &[Covariate]) -> Tensor3 {
        let d_z = self.cfg.d_z;
        let mut x = Tensor3::zeros(zs.len(), d_z + self.cfg.cov_channels(), DECODER_SEED_LEN);
        for (b, z) in zs.iter().enumerate() {
            for k in 0..d_z {
                for l in 0..DECODER_SEED_LEN {
                    *x.at_mut(b, k, l) = z[k];
                }
            }
            if self.cfg.conditional {
                for l in 0..DECODER_SEED_LEN {
                    *x.at_mut(b, d_z, l) = covs[b].cos;
                    *x.at_mut(b, d_z + 1, l) = covs[b].sin;
                }
            }
        }
        x
    }

    fn split_encoder_output(&self, out: &Tensor3) -> Result<(Vec<LatentGaussian>, Vec<Vec<f64>>), CvaeError> {
        if let Some(sample) = out.first_non_finite_sample() {
            return Err(CvaeError::NonFinite { site: "encoder output".into(), sample });
        }
        let d_z = self.cfg.d_z;
        let mut latents = Vec::with_capacity(out.batch());
        let mut raw = Vec::with_capacity(out.batch());
        for b in 0..out.batch() {
            let mu: Vec<f64> = (0..d_z).map(|k| out.at(b, k, 0)).collect();
            let lv_raw: Vec<f64> = (0..d_z).map(|k| out.at(b, d_z + k, 0)).collect();
            let var: Vec<f64> =
                lv_raw.iter().map(|&lv| lv.clamp(LOGVAR_MIN, LOGVAR_MAX).exp()).collect();
            latents.push(LatentGaussian { mu, var });
            raw.push(lv_raw);
        }
        Ok((latents, raw))
    }

    /// Deterministic eval-mode encoding of one normalized trajectory.
    pub fn encode(&self, y: &Trajectory, x: Covariate) -> Result<LatentGaussian, CvaeError> {
        let input = self.encoder_input(&[y], &[x])?;
        let out = self.encoder.infer(&input)?;
        let (mut latents, _) = self.split_encoder_output(&out)?;
        Ok(latents.remove(0))
    }

    /// Encode every trajectory of a normalized dataset (eval mode).
    pub fn encode_all(&self, data: &FleetDataset) -> Result<Vec<LatentGaussian>, CvaeError> {
        if data.norm.is_none() {
            return Err(CvaeError::DataNotNormalized);
        }
        let trajs: Vec<&Trajectory> = data.trajectories.iter().collect();
        let input = self.encoder_input(&trajs, &data.covariates)?;
        let out = self.encoder.infer(&input)?;
        let (latents, _) = self.split_encoder_output(&out)?;
        Ok(latents)
    }

    /// Deterministic eval-mode decoding of one latent point into an `H x 2`
    /// trajectory mean in normalized coordinates.
    pub fn decode(&self, z: &[f64], x: Covariate) -> Result<Vec<[f64; 2]>, CvaeError> {
        if z.len() != self.cfg.d_z {
            return Err(CvaeError::LatentDimMismatch { expected: self.cfg.d_z, got: z.len() });
        }
        let input = self.decoder_input(&[z.to_vec()], &[x]);
        let out = self.decoder.infer(&input)?;
        if let Some(sample) = out.first_non_finite_sample() {
            return Err(CvaeError::NonFinite { site: "decoder output".into(), sample });
        }
        Ok((0..self.cfg.h).map(|l| [out.at(0, 0, l), out.at(0, 1, l)]).collect())
    }

    /// Train-mode forward pass over `indices` with given per-sample noise.
    fn forward_pass(
        &mut self,
        data: &FleetDataset,
        indices: &[usize],
        eps: &[Vec<f64>],
    ) -> Result<ForwardPass, CvaeError> {
        let trajs: Vec<&Trajectory> = indices.iter().map(|&i| &data.trajectories[i]).collect();
        let covs: Vec<Covariate> = indices.iter().map(|&i| data.covariates[i]).collect();
        let enc_in = self.encoder_input(&trajs, &covs)?;
        let enc_out = self.encoder.forward(&enc_in)?;
        let (latents, logvar_raw) = self.split_encoder_output(&enc_out)?;

        let zs: Vec<Vec<f64>> = latents
            .iter()
            .zip(eps)
            .map(|(q, e)| q.mu.iter().zip(&q.var).zip(e).map(|((&m, &v), &ek)| m + v.sqrt() * ek).collect())
            .collect();
        let dec_in = self.decoder_input(&zs, &covs);
        let y_hat = self.decoder.forward(&dec_in)?;
        if let Some(sample) = y_hat.first_non_finite_sample() {
            return Err(CvaeError::NonFinite { site: "decoder output".into(), sample });
        }

        let mut recon = 0.0;
        for (b, t) in trajs.iter().enumerate() {
            for (l, p) in t.positions.iter().enumerate() {
                let d0 = y_hat.at(b, 0, l) - p[0];
                let d1 = y_hat.at(b, 1, l) - p[1];
                recon += d0 * d0 + d1 * d1;
            }
        }
        recon /= 2.0 * self.cfg.sigma2;
        let kl: f64 = latents.iter().map(kl_term).sum();
        let terms = ElboTerms { loss: recon + kl, recon, kl };
        if !terms.loss.is_finite() {
            let bad = latents.iter().position(|q| !kl_term(q).is_finite()).unwrap_or(0);
            return Err(CvaeError::NonFinite { site: "elbo".into(), sample: bad });
        }
        Ok(ForwardPass { latents, logvar_raw, zs, y_hat, terms })
    }

    /// Accumulate gradients of `grad_scale * loss` for the recorded pass.
    fn backward_pass(
        &mut self,
        data: &FleetDataset,
        indices: &[usize],
        eps: &[Vec<f64>],
        pass: &ForwardPass,
        grad_scale: f64,
    ) -> Result<(), CvaeError> {
        let d_z = self.cfg.d_z;
        let batch = indices.len();
        let (_, _, h) = pass.y_hat.shape();

        // d loss / d y_hat = (y_hat - y) / sigma^2
        let mut dy = Tensor3::zeros(batch, 2, h);
        for (b, &i) in indices.iter().enumerate() {
            let t = &data.trajectories[i];
            for (l, p) in t.positions.iter().enumerate() {
                *dy.at_mut(b, 0, l) = grad_scale * (pass.y_hat.at(b, 0, l) - p[0]) / self.cfg.sigma2;
                *dy.at_mut(b, 1, l) = grad_scale * (pass.y_hat.at(b, 1, l) - p[1]) / self.cfg.sigma2;
            }
        }
        let d_dec_in = self.decoder.backward(&dy)?;

        // d loss / d z: sum over the replicated positions; covariate channels drop
        let mut d_enc_out = Tensor3::zeros(batch, 2 * d_z, 1);
        for b in 0..batch {
            let q = &pass.latents[b];
            for k in 0..d_z {
                let mut dz = 0.0;
                for l in 0..DECODER_SEED_LEN {
                    dz += d_dec_in.at(b, k, l);
                }
                // z = mu + exp(lv/2) eps: dz/dmu = 1, dz/dlv = z_noise/2
                let gamma = q.var[k].sqrt();
                let clamped = pass.logvar_raw[b][k] < LOGVAR_MIN || pass.logvar_raw[b][k] > LOGVAR_MAX;
                let d_mu = dz + grad_scale * q.mu[k];
                let d_lv_latent = dz * 0.5 * gamma * eps[b][k];
                let d_lv_kl = grad_scale * 0.5 * (q.var[k] - 1.0);
                let d_lv = if clamped { 0.0 } else { d_lv_latent + d_lv_kl };
                *d_enc_out.at_mut(b, k, 0) = d_mu;
                *d_enc_out.at_mut(b, d_z + k, 0) = d_lv;
            }
        }
        self.encoder.backward(&d_enc_out)?;
        Ok(())
    }
}

/// ELBO terms of a batch, with one reparameterized draw per sample from the
/// `elbo.eps` substream of `seed`. Pure: works on a clone of the model, in
/// train mode (batch statistics), without touching running statistics that
/// matter to the caller.
pub fn elbo_loss(
    model: &CvaeModel,
    data: &FleetDataset,
    indices: &[usize],
    seed: u64,
) -> Result<ElboTerms, CvaeError> {
    if data.norm.is_none() {
        return Err(CvaeError::DataNotNormalized);
    }
    let eps = draw_eps(model.cfg.d_z, indices.len(), seed);
    let mut probe = model.clone();
    let pass = probe.forward_pass(data, indices, &eps)?;
    Ok(pass.terms)
}

fn draw_eps(d_z: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = crate::rng::substream(seed, "elbo.eps");
    (0..n).map(|_| (0..d_z).map(|_| rng.sample(StandardNormal)).collect()).collect()
}
