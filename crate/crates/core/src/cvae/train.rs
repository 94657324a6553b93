//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{build_model, CvaeError, CvaeModel, ModelConfig};
use crate::nncore::AdamState;
use crate::trajdata::FleetDataset;

/// Loss is recorded as a per-trajectory mean; an epoch above this (or a
/// non-finite value) aborts the run.
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Per-epoch `-ELBO` split into reconstruction and regularization, as
/// per-trajectory means over the epoch's batches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: CvaeModel,
    pub trace: TrainTrace,
    pub adam: AdamState,
}

/// Train a model on a normalized dataset: shuffled mini-batches, one
/// reparameterized draw per trajectory per step, Adam on the batch-mean
/// loss. Deterministic per config seed; batches that would leave a single
/// sample (unusable under train-mode batch norm) are skipped.
pub fn train(data: &FleetDataset, cfg: &ModelConfig) -> Result<TrainOutput, CvaeError> {
    if data.norm.is_none() {
        return Err(CvaeError::DataNotNormalized);
    }
    if data.is_empty() {
        return Err(CvaeError::InvalidConfig("empty dataset".into()));
    }
    let mut model = build_model(cfg)?;
    let mut adam = AdamState::new(model.param_len(), cfg.learning_rate);
    let mut shuffle_rng = crate::rng::substream(cfg.seed, "train.shuffle");
    let mut eps_rng = crate::rng::substream(cfg.seed, "train.eps");
    let mut trace = TrainTrace::default();

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut used = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let eps: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| (0..cfg.d_z).map(|_| eps_rng.sample(StandardNormal)).collect())
                .collect();
            model.zero_grads();
            let pass = model.forward_pass(data, chunk, &eps)?;
            model.backward_pass(data, chunk, &eps, &pass, 1.0 / chunk.len() as f64)?;
            let grads = model.grads();
            let mut params = model.params();
            adam.step(&mut params, &grads);
            model.set_params(&params);
            sums.0 += pass.terms.loss;
            sums.1 += pass.terms.recon;
            sums.2 += pass.terms.kl;
            used += chunk.len();
        }
        let n = used.max(1) as f64;
        let stats = EpochStats { epoch, loss: sums.0 / n, recon: sums.1 / n, kl: sums.2 / n };
        trace.epochs.push(stats);
        if !stats.loss.is_finite() || stats.loss > DIVERGENCE_LIMIT {
            let loss = stats.loss;
            return Err(CvaeError::Diverged { epoch, loss, trace });
        }
    }
    Ok(TrainOutput { model, trace, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::tests::small_dataset;
    use crate::cvae::{build_model, elbo_loss};

    fn quick_cfg(seed: u64, epochs: usize) -> ModelConfig {
        ModelConfig {
            d_z: 2,
            epochs,
            batch_size: 16,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = small_dataset(21);
        let cfg = quick_cfg(21, 0);
        let out = train(&data, &cfg).unwrap();
        let init = build_model(&cfg).unwrap();
        assert_eq!(out.model.params(), init.params());
        assert!(out.trace.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = small_dataset(22);
        let cfg = quick_cfg(22, 8);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn trace_accounting_holds_and_loss_improves() {
        let data = small_dataset(23);
        let cfg = quick_cfg(23, 60);
        let out = train(&data, &cfg).unwrap();
        for e in &out.trace.epochs {
            assert!((e.loss - (e.recon + e.kl)).abs() < 1e-8);
        }
        let k = out.trace.epochs.len() / 10;
        let median = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let first: Vec<f64> = out.trace.epochs[..k].iter().map(|e| e.loss).collect();
        let last: Vec<f64> = out.trace.epochs[out.trace.epochs.len() - k..].iter().map(|e| e.loss).collect();
        assert!(median(&last) < median(&first));
    }

    #[test]
    fn unnormalized_data_is_rejected() {
        let cfg = quick_cfg(24, 1);
        let (raw, _) = crate::trajdata::synth_fleet(&crate::trajdata::SynthConfig {
            n_vessels: 3,
            n_days: 3,
            n_groups: 1,
            seed: 24,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(train(&raw, &cfg), Err(CvaeError::DataNotNormalized)));
    }

    #[test]
    fn trained_elbo_beats_initial_elbo() {
        let data = small_dataset(25);
        let cfg = quick_cfg(25, 40);
        let out = train(&data, &cfg).unwrap();
        let indices: Vec<usize> = (0..data.len()).collect();
        let before = elbo_loss(&build_model(&cfg).unwrap(), &data, &indices, 1).unwrap();
        let after = elbo_loss(&out.model, &data, &indices, 1).unwrap();
        assert!(after.loss < before.loss);
    }
}
