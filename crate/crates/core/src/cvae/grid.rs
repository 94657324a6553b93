//! Decoder sweeps over a latent grid, tabulating trajectory features by
//! month of the year.

use serde::{Deserialize, Serialize};

use super::{CvaeError, CvaeModel};
use crate::trajdata::{encode_day_of_year, traj_features, NormStats, Trajectory};

/// Grid over the first two latent dimensions; remaining dimensions are
/// fixed to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z1_min: f64,
    pub z1_max: f64,
    pub z1_steps: usize,
    pub z2_min: f64,
    pub z2_max: f64,
    pub z2_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { z1_min: -2.0, z1_max: 1.2, z1_steps: 17, z2_min: -2.0, z2_max: 2.0, z2_steps: 21 }
    }
}

fn axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![min];
    }
    (0..steps)
        .map(|i| if i + 1 == steps { max } else { min + (max - min) * i as f64 / (steps - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub z1: f64,
    pub z2: f64,
    pub month: u32,
    pub d_max: f64,
    pub theta_max: f64,
}

/// Decode every grid cell for each of the 12 months and tabulate the maximal
/// harbour distance and its heading. Months enter through the day-of-year
/// covariate at the mid-month day; decoded trajectories are denormalized
/// before feature extraction.
pub fn decode_grid(
    model: &CvaeModel,
    norm: &NormStats,
    harbour: [f64; 2],
    spec: &GridSpec,
) -> Result<Vec<GridRow>, CvaeError> {
    if !model.cfg.conditional {
        return Err(CvaeError::NotConditional);
    }
    if model.cfg.d_z < 2 {
        return Err(CvaeError::NeedsTwoDims { d_z: model.cfg.d_z });
    }
    let mut rows = Vec::with_capacity(spec.z1_steps * spec.z2_steps * 12);
    for &z1 in &axis(spec.z1_min, spec.z1_max, spec.z1_steps) {
        for &z2 in &axis(spec.z2_min, spec.z2_max, spec.z2_steps) {
            let mut z = vec![0.0; model.cfg.d_z];
            z[0] = z1;
            z[1] = z2;
            for month in 1..=12u32 {
                let j = ((month as f64 - 0.5) * 365.0 / 12.0).round() as u32;
                let cov = encode_day_of_year(j);
                let decoded = model.decode(&z, cov)?;
                let positions: Vec<[f64; 2]> = decoded.iter().map(|&p| norm.invert(p)).collect();
                let traj = Trajectory {
                    vessel_id: String::new(),
                    date: chrono::NaiveDate::from_ymd_opt(2000, month, 15).expect("valid date"),
                    positions,
                };
                let (d_max, theta_max) = traj_features(&traj, harbour);
                rows.push(GridRow { z1, z2, month, d_max, theta_max });
            }
        }
    }
    Ok(rows)
}
