//! Trajectory ingestion and preparation.
//!
//! Raw position pings are synchronized onto a fixed grid of `H` equally
//! spaced samples per day by piecewise-linear interpolation, standardized
//! with dataset-wide per-coordinate statistics, and paired with a periodic
//! day-of-year covariate. A synthetic-fleet generator with planted
//! behavioural groups provides ground truth for end-to-end checks.

mod io;
mod synth;

pub use io::{read_pings_csv, read_trajectory_csv, write_pings_csv, write_trajectory_csv};
pub use synth::{synth_fleet, SynthConfig};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default harbour location (lon, lat) used by the synthetic generator.
pub const DEFAULT_HARBOUR: [f64; 2] = [-4.28, 47.78];

/// Default number of grid samples per day.
pub const DEFAULT_H: usize = 24;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("vessel {vessel} on {date}: need at least 2 pings, got {n}")]
    NotEnoughPings { vessel: String, date: NaiveDate, n: usize },
    #[error("vessel {vessel}: ping timestamps must be strictly increasing (violation at index {index})")]
    NonMonotoneTimestamps { vessel: String, index: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("coordinate {coord} has zero variance; cannot standardize")]
    ZeroVariance { coord: usize },
    #[error("dataset is not normalized")]
    NotNormalized,
    #[error("duplicate trajectory for vessel {vessel} on {date}")]
    DuplicateTrajectory { vessel: String, date: NaiveDate },
    #[error("vessel {vessel} on {date}: trajectory endpoints deviate from the harbour by more than {eps}")]
    PortMismatch { vessel: String, date: NaiveDate, eps: f64 },
    #[error("invalid synthetic-fleet config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {detail}")]
    MalformedRow { line: u64, detail: String },
    #[error("missing column `{name}` in {path}")]
    MissingColumn { name: String, path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// One raw position record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPing {
    pub vessel_id: String,
    pub timestamp: DateTime<Utc>,
    pub lon: f64,
    pub lat: f64,
}

/// One vessel-day: `H` hourly (lon, lat) samples plus identity metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vessel_id: String,
    pub date: NaiveDate,
    pub positions: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn h(&self) -> usize {
        self.positions.len()
    }
}

/// Periodic day-of-year encoding, a point on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub cos: f64,
    pub sin: f64,
}

/// Per-coordinate standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl NormStats {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.mean[0]) / self.std[0], (p[1] - self.mean[1]) / self.std[1]]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.std[0] + self.mean[0], p[1] * self.std[1] + self.mean[1]]
    }
}

/// A corpus of trajectories with parallel covariates.
///
/// `norm` is `None` for raw data and carries the standardization statistics
/// once [`normalize`] has been applied. `harbour` is always in raw
/// (lon, lat) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetDataset {
    pub trajectories: Vec<Trajectory>,
    pub covariates: Vec<Covariate>,
    pub norm: Option<NormStats>,
    pub harbour: [f64; 2],
}

impl FleetDataset {
    /// Build a dataset from trajectories, encoding covariates from dates and
    /// rejecting duplicate (vessel, date) entries.
    pub fn from_trajectories(trajectories: Vec<Trajectory>, harbour: [f64; 2]) -> Result<Self, TrajError> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &trajectories {
            if !seen.insert((t.vessel_id.clone(), t.date)) {
                return Err(TrajError::DuplicateTrajectory { vessel: t.vessel_id.clone(), date: t.date });
            }
        }
        let covariates = trajectories.iter().map(|t| encode_covariate(t.date)).collect();
        Ok(Self { trajectories, covariates, norm: None, harbour })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Check that every trajectory starts and ends at the harbour within `eps`.
    pub fn check_ports(&self, eps: f64) -> Result<(), TrajError> {
        for t in &self.trajectories {
            for p in [t.positions.first(), t.positions.last()].into_iter().flatten() {
                let d = ((p[0] - self.harbour[0]).powi(2) + (p[1] - self.harbour[1]).powi(2)).sqrt();
                if d > eps {
                    return Err(TrajError::PortMismatch {
                        vessel: t.vessel_id.clone(),
                        date: t.date,
                        eps,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Synchronize one vessel-day of pings onto `h` equally spaced grid times by
/// linear interpolation between the bracketing pings; grid times outside the
/// ping span clamp to the nearest ping.
pub fn synchronize(pings: &[RawPing], date: NaiveDate, h: usize) -> Result<Trajectory, TrajError> {
    let vessel = pings.first().map(|p| p.vessel_id.clone()).unwrap_or_default();
    if pings.len() < 2 {
        return Err(TrajError::NotEnoughPings { vessel, date, n: pings.len() });
    }
    for i in 1..pings.len() {
        if pings[i].timestamp <= pings[i - 1].timestamp {
            return Err(TrajError::NonMonotoneTimestamps { vessel, index: i });
        }
    }
    let day_start = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
    let secs: Vec<f64> = pings
        .iter()
        .map(|p| (p.timestamp - day_start).num_milliseconds() as f64 / 1e3)
        .collect();
    let step = 86_400.0 / h as f64;
    let mut positions = Vec::with_capacity(h);
    for i in 0..h {
        let t = i as f64 * step;
        positions.push(interp_at(pings, &secs, t));
    }
    Ok(Trajectory { vessel_id: vessel, date, positions })
}

fn interp_at(pings: &[RawPing], secs: &[f64], t: f64) -> [f64; 2] {
    if t <= secs[0] {
        return [pings[0].lon, pings[0].lat];
    }
    if t >= secs[secs.len() - 1] {
        let last = &pings[pings.len() - 1];
        return [last.lon, last.lat];
    }
    // secs is strictly increasing; find the bracketing segment
    let j = secs.partition_point(|&s| s <= t);
    let (a, b) = (&pings[j - 1], &pings[j]);
    let w = (t - secs[j - 1]) / (secs[j] - secs[j - 1]);
    [a.lon + w * (b.lon - a.lon), a.lat + w * (b.lat - a.lat)]
}

/// Day-of-year in `[1, 365]`; Feb 29 maps to 59, later leap-year days shift
/// down by one so Dec 31 is 365 in every year.
pub fn day_of_year(date: NaiveDate) -> u32 {
    let j = date.ordinal();
    if date.leap_year() && j >= 60 {
        j - 1
    } else {
        j.min(365)
    }
}

/// `(cos(2 pi j / 365), sin(2 pi j / 365))` for the date's day-of-year `j`.
pub fn encode_covariate(date: NaiveDate) -> Covariate {
    encode_day_of_year(day_of_year(date))
}

pub fn encode_day_of_year(j: u32) -> Covariate {
    let angle = 2.0 * std::f64::consts::PI * j as f64 / 365.0;
    Covariate { cos: angle.cos(), sin: angle.sin() }
}

/// Standardize every coordinate with dataset-wide per-coordinate mean and
/// standard deviation. Returns the normalized dataset and the statistics.
pub fn normalize(data: &FleetDataset) -> Result<(FleetDataset, NormStats), TrajError> {
    if data.is_empty() {
        return Err(TrajError::EmptyDataset);
    }
    let mut sum = [0.0; 2];
    let mut sumsq = [0.0; 2];
    let mut n = 0.0;
    for t in &data.trajectories {
        for p in &t.positions {
            for c in 0..2 {
                sum[c] += p[c];
                sumsq[c] += p[c] * p[c];
            }
            n += 1.0;
        }
    }
    let mut mean = [0.0; 2];
    let mut std = [0.0; 2];
    for c in 0..2 {
        mean[c] = sum[c] / n;
        let var = (sumsq[c] / n - mean[c] * mean[c]).max(0.0);
        std[c] = var.sqrt();
        if std[c] <= 1e-12 {
            return Err(TrajError::ZeroVariance { coord: c });
        }
    }
    let stats = NormStats { mean, std };
    let mut out = data.clone();
    for t in &mut out.trajectories {
        for p in &mut t.positions {
            *p = stats.apply(*p);
        }
    }
    out.norm = Some(stats.clone());
    Ok((out, stats))
}

/// Invert [`normalize`]; requires a normalized dataset.
pub fn denormalize(data: &FleetDataset) -> Result<FleetDataset, TrajError> {
    let stats = data.norm.as_ref().ok_or(TrajError::NotNormalized)?;
    let mut out = data.clone();
    for t in &mut out.trajectories {
        for p in &mut t.positions {
            *p = stats.invert(*p);
        }
    }
    out.norm = None;
    Ok(out)
}

/// Maximal distance to the harbour and the heading of the maximally distant
/// point (`atan2` of the offset). Ties break to the earliest hour; a
/// trajectory pinned at the harbour reports direction 0 by convention.
pub fn traj_features(t: &Trajectory, harbour: [f64; 2]) -> (f64, f64) {
    let mut d_max = 0.0;
    let mut best = [0.0; 2];
    for p in &t.positions {
        let dx = p[0] - harbour[0];
        let dy = p[1] - harbour[1];
        let d = (dx * dx + dy * dy).sqrt();
        if d > d_max {
            d_max = d;
            best = [dx, dy];
        }
    }
    let theta = if d_max == 0.0 { 0.0 } else { best[1].atan2(best[0]) };
    (d_max, theta)
}
