//! Bhattacharyya overlap of latent Gaussians and behavioural stability
//! indices.
//!
//! For diagonal Gaussians the Bhattacharyya coefficient factorizes over
//! dimensions:
//!
//! ```text
//! BC(p, q) = prod_k sqrt(2 g_p g_q / (g_p^2 + g_q^2))
//!            * exp(-(mu_p - mu_q)^2 / (4 (g_p^2 + g_q^2)))
//! ```
//!
//! It lies in `(0, 1]` and equals 1 exactly when the distributions coincide.
//! The Hellinger distance is `H = sqrt(1 - BC)`; no further divergences are
//! provided. Stability indices are means of the binarized coefficient
//! `1{BC >= s}` over day-pair sets: consecutive observed days (daily) or all
//! distinct observed days (global), per vessel or pooled across vessel pairs.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvae::LatentGaussian;

/// Overlap threshold used throughout unless overridden.
pub const DEFAULT_BC_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("latent dimensions differ: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("non-positive variance in dimension {dim}")]
    BadVariance { dim: usize },
    #[error("no embedding stored for vessel {vessel} on {date}")]
    MissingKey { vessel: String, date: NaiveDate },
    #[error("duplicate embedding for vessel {vessel} on {date}")]
    DuplicateKey { vessel: String, date: NaiveDate },
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("fleet indices need at least 2 vessels, got {0}")]
    TooFewVessels(usize),
}

/// One dimension's Bhattacharyya factor.
fn bc_dim(mu_p: f64, var_p: f64, mu_q: f64, var_q: f64, dim: usize) -> Result<f64, LatentError> {
    if var_p <= 0.0 || var_q <= 0.0 {
        return Err(LatentError::BadVariance { dim });
    }
    let sum = var_p + var_q;
    let scale = (2.0 * var_p.sqrt() * var_q.sqrt() / sum).sqrt();
    let diff = mu_p - mu_q;
    Ok(scale * (-(diff * diff) / (4.0 * sum)).exp())
}

/// Per-dimension Bhattacharyya factors; their product is [`bc_pair`].
pub fn bc_factors(p: &LatentGaussian, q: &LatentGaussian) -> Result<Vec<f64>, LatentError> {
    if p.d_z() != q.d_z() {
        return Err(LatentError::DimMismatch { a: p.d_z(), b: q.d_z() });
    }
    (0..p.d_z())
        .map(|k| bc_dim(p.mu[k], p.var[k], q.mu[k], q.var[k], k))
        .collect()
}

/// Bhattacharyya coefficient of two diagonal Gaussians.
pub fn bc_pair(p: &LatentGaussian, q: &LatentGaussian) -> Result<f64, LatentError> {
    Ok(bc_factors(p, q)?.iter().product())
}

/// `H(p, q) = sqrt(1 - BC(p, q))`.
pub fn hellinger(p: &LatentGaussian, q: &LatentGaussian) -> Result<f64, LatentError> {
    Ok((1.0 - bc_pair(p, q)?).max(0.0).sqrt())
}

/// Embeddings indexed by (vessel, date), one per vessel-day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    map: BTreeMap<(String, NaiveDate), LatentGaussian>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, vessel: &str, date: NaiveDate, q: LatentGaussian) -> Result<(), LatentError> {
        if self.map.insert((vessel.to_string(), date), q).is_some() {
            return Err(LatentError::DuplicateKey { vessel: vessel.to_string(), date });
        }
        Ok(())
    }

    pub fn get(&self, vessel: &str, date: NaiveDate) -> Option<&LatentGaussian> {
        self.map.get(&(vessel.to_string(), date))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, NaiveDate), &LatentGaussian)> {
        self.map.iter()
    }

    /// Vessel ids in sorted order.
    pub fn vessels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.map.keys().map(|(v, _)| v.clone()).collect();
        out.dedup();
        out
    }

    /// Observed dates of one vessel, sorted.
    pub fn dates_of(&self, vessel: &str) -> Vec<NaiveDate> {
        self.map
            .range((vessel.to_string(), NaiveDate::MIN)..=(vessel.to_string(), NaiveDate::MAX))
            .map(|((_, d), _)| *d)
            .collect()
    }

    fn require(&self, vessel: &str, date: NaiveDate) -> Result<&LatentGaussian, LatentError> {
        self.get(vessel, date).ok_or_else(|| LatentError::MissingKey {
            vessel: vessel.to_string(),
            date,
        })
    }

    /// BC between (vessel b, day t) and (vessel b', day t').
    pub fn bc(&self, b: &str, t: NaiveDate, b2: &str, t2: NaiveDate) -> Result<f64, LatentError> {
        bc_pair(self.require(b, t)?, self.require(b2, t2)?)
    }
}

/// Vectorized [`EmbeddingStore::bc`] over explicit key pairs.
pub fn bc_series(
    store: &EmbeddingStore,
    pairs: &[((String, NaiveDate), (String, NaiveDate))],
) -> Result<Vec<f64>, LatentError> {
    pairs
        .iter()
        .map(|((b, t), (b2, t2))| store.bc(b, *t, b2, *t2))
        .collect()
}

/// Day-pair set of a per-vessel stability index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    /// All unordered pairs of distinct observed days.
    Global,
    /// Calendar-consecutive observed day pairs (t, t+1).
    Daily,
}

/// Day-pair set of a fleet stability index (over vessel pairs b < b').
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FleetPairKind {
    /// All cross-vessel day pairs with t != t'.
    Global,
    /// Cross-vessel consecutive pairs: one vessel's day t against the
    /// other's day t+1, both orientations.
    Daily,
    /// Same-day cross-vessel pairs (variant restricted to common days).
    SameDay,
}

/// A stability value together with the number of pairs it averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexValue {
    pub value: f64,
    pub pairs: usize,
}

fn check_threshold(s: f64) -> Result<(), LatentError> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(LatentError::BadThreshold(s))
    }
}

/// Per-vessel stability index: mean of `1{BC >= s}` over the available
/// day pairs of the given kind. `None` when the vessel has no such pair.
pub fn stability_index(
    store: &EmbeddingStore,
    vessel: &str,
    kind: PairKind,
    s: f64,
) -> Result<Option<IndexValue>, LatentError> {
    check_threshold(s)?;
    let dates = store.dates_of(vessel);
    let mut hits = 0usize;
    let mut pairs = 0usize;
    match kind {
        PairKind::Global => {
            for i in 0..dates.len() {
                for j in i + 1..dates.len() {
                    let bc = store.bc(vessel, dates[i], vessel, dates[j])?;
                    pairs += 1;
                    hits += usize::from(bc >= s);
                }
            }
        }
        PairKind::Daily => {
            for &t in &dates {
                let next = t + Duration::days(1);
                if store.get(vessel, next).is_some() {
                    let bc = store.bc(vessel, t, vessel, next)?;
                    pairs += 1;
                    hits += usize::from(bc >= s);
                }
            }
        }
    }
    Ok((pairs > 0).then(|| IndexValue { value: hits as f64 / pairs as f64, pairs }))
}

/// Fleet stability index: mean of `1{BC >= s}` over all unordered vessel
/// pairs and their available day pairs of the given kind. `Ok(None)` when no
/// pair is available.
pub fn fleet_stability(
    store: &EmbeddingStore,
    kind: FleetPairKind,
    s: f64,
) -> Result<Option<IndexValue>, LatentError> {
    check_threshold(s)?;
    let vessels = store.vessels();
    if vessels.len() < 2 {
        return Err(LatentError::TooFewVessels(vessels.len()));
    }
    let mut hits = 0usize;
    let mut pairs = 0usize;
    for i in 0..vessels.len() {
        let days_a = store.dates_of(&vessels[i]);
        for j in i + 1..vessels.len() {
            let days_b = store.dates_of(&vessels[j]);
            match kind {
                FleetPairKind::Global => {
                    for &ta in &days_a {
                        for &tb in &days_b {
                            if ta == tb {
                                continue;
                            }
                            let bc = store.bc(&vessels[i], ta, &vessels[j], tb)?;
                            pairs += 1;
                            hits += usize::from(bc >= s);
                        }
                    }
                }
                FleetPairKind::Daily => {
                    for &ta in &days_a {
                        let next = ta + Duration::days(1);
                        if store.get(&vessels[j], next).is_some() {
                            let bc = store.bc(&vessels[i], ta, &vessels[j], next)?;
                            pairs += 1;
                            hits += usize::from(bc >= s);
                        }
                    }
                    for &tb in &days_b {
                        let next = tb + Duration::days(1);
                        if store.get(&vessels[i], next).is_some() {
                            let bc = store.bc(&vessels[j], tb, &vessels[i], next)?;
                            pairs += 1;
                            hits += usize::from(bc >= s);
                        }
                    }
                }
                FleetPairKind::SameDay => {
                    for &ta in &days_a {
                        if store.get(&vessels[j], ta).is_some() {
                            let bc = store.bc(&vessels[i], ta, &vessels[j], ta)?;
                            pairs += 1;
                            hits += usize::from(bc >= s);
                        }
                    }
                }
            }
        }
    }
    Ok((pairs > 0).then(|| IndexValue { value: hits as f64 / pairs as f64, pairs }))
}

/// Stability of one vessel: daily and global indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselStability {
    pub vessel_id: String,
    pub dsi: Option<IndexValue>,
    pub gsi: Option<IndexValue>,
}

/// Full stability report at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub threshold: f64,
    pub per_vessel: Vec<VesselStability>,
    pub fleet_dsi: Option<IndexValue>,
    pub fleet_gsi: Option<IndexValue>,
    pub fleet_same_day: Option<IndexValue>,
}

pub fn stability_report(store: &EmbeddingStore, s: f64) -> Result<StabilityReport, LatentError> {
    check_threshold(s)?;
    let mut per_vessel = Vec::new();
    for vessel in store.vessels() {
        per_vessel.push(VesselStability {
            dsi: stability_index(store, &vessel, PairKind::Daily, s)?,
            gsi: stability_index(store, &vessel, PairKind::Global, s)?,
            vessel_id: vessel,
        });
    }
    let fleet = |kind| fleet_stability(store, kind, s);
    Ok(StabilityReport {
        threshold: s,
        per_vessel,
        fleet_dsi: fleet(FleetPairKind::Daily)?,
        fleet_gsi: fleet(FleetPairKind::Global)?,
        fleet_same_day: fleet(FleetPairKind::SameDay)?,
    })
}
