//! Latent-space diagnostics: dimension sweeps and per-dimension importance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train, CvaeError, LatentGaussian, ModelConfig, TrainTrace};
use crate::latent::bc_factors;
use crate::trajdata::FleetDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Vae,
    Cvae,
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelVariant::Vae => write!(f, "vae"),
            ModelVariant::Cvae => write!(f, "cvae"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub variant: ModelVariant,
    pub d_z: usize,
    pub trace: TrainTrace,
}

/// Train one model per `(variant, d_z)` combination and collect the loss/KL
/// curves. Each run derives its own seed from the base config seed, so runs
/// are independent yet reproducible.
pub fn dim_sweep(
    data: &FleetDataset,
    d_z_list: &[usize],
    base: &ModelConfig,
    variants: &[ModelVariant],
) -> Result<Vec<SweepEntry>, CvaeError> {
    let mut out = Vec::with_capacity(d_z_list.len() * variants.len());
    for &variant in variants {
        for &d_z in d_z_list {
            let mut cfg = base.clone();
            cfg.d_z = d_z;
            cfg.conditional = variant == ModelVariant::Cvae;
            cfg.seed = crate::rng::derive_seed(base.seed, &format!("sweep.{variant}.dz{d_z}"));
            let trained = train(data, &cfg)?;
            out.push(SweepEntry { variant, d_z, trace: trained.trace });
        }
    }
    Ok(out)
}

/// Distribution summaries of one latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub dim: usize,
    pub bc_median: f64,
    pub bc_mean: f64,
    pub kl_median: f64,
    pub kl_mean: f64,
}

/// Per-dimension BC/KL summaries with dimensions ranked by median BC
/// ascending (most informative first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimDiagnostics {
    pub stats: Vec<DimStats>,
    pub ranking: Vec<usize>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Summarize each latent dimension over `n_pairs` sampled embedding pairs
/// (BC factors) and all embeddings (per-dimension KL terms).
pub fn dim_diagnostics(
    embeddings: &[LatentGaussian],
    n_pairs: usize,
    seed: u64,
) -> Result<DimDiagnostics, CvaeError> {
    if embeddings.len() < 2 {
        return Err(CvaeError::TooFewEmbeddings { n: embeddings.len() });
    }
    let d_z = embeddings[0].d_z();
    let mut rng = crate::rng::substream(seed, "diagnostics.pairs");
    let mut bc_per_dim: Vec<Vec<f64>> = vec![Vec::with_capacity(n_pairs); d_z];
    for _ in 0..n_pairs {
        let i = rng.gen_range(0..embeddings.len());
        let mut j = rng.gen_range(0..embeddings.len() - 1);
        if j >= i {
            j += 1;
        }
        let factors = bc_factors(&embeddings[i], &embeddings[j])
            .map_err(|e| CvaeError::InvalidConfig(e.to_string()))?;
        for (k, f) in factors.into_iter().enumerate() {
            bc_per_dim[k].push(f);
        }
    }
    let mut kl_per_dim: Vec<Vec<f64>> = vec![Vec::with_capacity(embeddings.len()); d_z];
    for q in embeddings {
        if q.d_z() != d_z {
            return Err(CvaeError::LatentDimMismatch { expected: d_z, got: q.d_z() });
        }
        for k in 0..d_z {
            kl_per_dim[k].push(0.5 * (q.var[k] + q.mu[k] * q.mu[k] - q.var[k].ln() - 1.0));
        }
    }
    let mut stats = Vec::with_capacity(d_z);
    for k in 0..d_z {
        let bc_mean = bc_per_dim[k].iter().sum::<f64>() / bc_per_dim[k].len().max(1) as f64;
        let kl_mean = kl_per_dim[k].iter().sum::<f64>() / kl_per_dim[k].len() as f64;
        stats.push(DimStats {
            dim: k,
            bc_median: median(&mut bc_per_dim[k]),
            bc_mean,
            kl_median: median(&mut kl_per_dim[k]),
            kl_mean,
        });
    }
    let mut ranking: Vec<usize> = (0..d_z).collect();
    ranking.sort_by(|&a, &b| stats[a].bc_median.total_cmp(&stats[b].bc_median).then(a.cmp(&b)));
    Ok(DimDiagnostics { stats, ranking })
}
