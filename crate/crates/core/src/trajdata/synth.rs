//! Synthetic fleets with planted behavioural groups.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{day_of_year, FleetDataset, TrajError, Trajectory, DEFAULT_HARBOUR, DEFAULT_H};
use crate::rng::substream;

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date")
}

fn default_h() -> usize {
    DEFAULT_H
}

fn default_harbour() -> [f64; 2] {
    DEFAULT_HARBOUR
}

/// Configuration of the synthetic-fleet generator.
///
/// Each vessel belongs to a behavioural group `g` (round-robin assignment)
/// with archetype direction `directions[g]` (radians) and reach
/// `distances[g]` (degrees). A fishing day is an out-and-back loop from the
/// harbour: heading drawn around the group direction, reach around the
/// seasonally modulated group distance `d_g * (1 + a cos(2 pi j / 365))`.
/// With probability `p_stay` the previous day's heading and reach are reused.
/// `noise_sd` is used as the standard deviation for the heading (radians),
/// reach (degrees) and per-hour positional jitter (degrees); the first and
/// last sample of every day sit exactly on the harbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_vessels: usize,
    pub n_days: usize,
    pub n_groups: usize,
    /// Per-group heading in radians; empty means evenly spaced on the circle.
    #[serde(default)]
    pub directions: Vec<f64>,
    /// Per-group reach in degrees; empty means 0.6 for every group.
    #[serde(default)]
    pub distances: Vec<f64>,
    /// Seasonal reach amplitude as a fraction.
    #[serde(default)]
    pub seasonal_amplitude: f64,
    /// Probability of reusing the previous day's heading and reach.
    #[serde(default)]
    pub p_stay: f64,
    #[serde(default)]
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_harbour")]
    pub harbour: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_vessels: 20,
            n_days: 120,
            n_groups: 3,
            directions: Vec::new(),
            distances: Vec::new(),
            seasonal_amplitude: 0.0,
            p_stay: 0.0,
            noise_sd: 0.0,
            seed: 0,
            start_date: default_start_date(),
            h: DEFAULT_H,
            harbour: DEFAULT_HARBOUR,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(Vec<f64>, Vec<f64>), TrajError> {
        if self.n_vessels == 0 || self.n_days == 0 || self.n_groups == 0 {
            return Err(TrajError::InvalidConfig("counts must be positive".into()));
        }
        if self.n_groups > self.n_vessels {
            return Err(TrajError::InvalidConfig("more groups than vessels".into()));
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return Err(TrajError::InvalidConfig("p_stay must be in [0, 1]".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(TrajError::InvalidConfig("noise_sd must be >= 0".into()));
        }
        if self.h < 2 {
            return Err(TrajError::InvalidConfig("need at least 2 samples per day".into()));
        }
        let directions = if self.directions.is_empty() {
            (0..self.n_groups)
                .map(|g| 2.0 * std::f64::consts::PI * g as f64 / self.n_groups as f64)
                .collect()
        } else if self.directions.len() == self.n_groups {
            self.directions.clone()
        } else {
            return Err(TrajError::InvalidConfig("directions must have one entry per group".into()));
        };
        let distances = if self.distances.is_empty() {
            vec![0.6; self.n_groups]
        } else if self.distances.len() == self.n_groups {
            self.distances.clone()
        } else {
            return Err(TrajError::InvalidConfig("distances must have one entry per group".into()));
        };
        Ok((directions, distances))
    }
}

/// Planted vessel-to-group assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLabel {
    pub vessel_id: String,
    pub group: usize,
}

pub fn vessel_name(index: usize) -> String {
    format!("v{index:03}")
}

/// Generate a fleet with planted groups. Deterministic given the seed; each
/// vessel draws from its own substream so subsets regenerate identically.
pub fn synth_fleet(cfg: &SynthConfig) -> Result<(FleetDataset, Vec<GroupLabel>), TrajError> {
    let (directions, distances) = cfg.validate()?;
    let mut trajectories = Vec::with_capacity(cfg.n_vessels * cfg.n_days);
    let mut labels = Vec::with_capacity(cfg.n_vessels);
    for v in 0..cfg.n_vessels {
        let group = v % cfg.n_groups;
        let vessel_id = vessel_name(v);
        labels.push(GroupLabel { vessel_id: vessel_id.clone(), group });
        let mut rng = substream(cfg.seed, &format!("synth.vessel.{v}"));
        let mut heading = 0.0;
        let mut reach = 0.0;
        for di in 0..cfg.n_days {
            let date = cfg.start_date + Duration::days(di as i64);
            let j = day_of_year(date);
            let stay_draw: f64 = rng.gen();
            let fresh = di == 0 || stay_draw >= cfg.p_stay;
            if fresh {
                let eh: f64 = rng.sample(StandardNormal);
                let er: f64 = rng.sample(StandardNormal);
                heading = directions[group] + cfg.noise_sd * eh;
                let seasonal = 1.0 + cfg.seasonal_amplitude
                    * (2.0 * std::f64::consts::PI * j as f64 / 365.0).cos();
                reach = (distances[group] * seasonal + cfg.noise_sd * er).max(0.0);
            }
            let dir = [heading.cos(), heading.sin()];
            let mut positions = Vec::with_capacity(cfg.h);
            for hi in 0..cfg.h {
                let profile = (std::f64::consts::PI * hi as f64 / (cfg.h - 1) as f64).sin();
                let mut p = [
                    cfg.harbour[0] + dir[0] * reach * profile,
                    cfg.harbour[1] + dir[1] * reach * profile,
                ];
                if hi > 0 && hi + 1 < cfg.h {
                    let jx: f64 = rng.sample(StandardNormal);
                    let jy: f64 = rng.sample(StandardNormal);
                    p[0] += cfg.noise_sd * jx;
                    p[1] += cfg.noise_sd * jy;
                }
                positions.push(p);
            }
            trajectories.push(Trajectory { vessel_id: vessel_id.clone(), date, positions });
        }
    }
    let data = FleetDataset::from_trajectories(trajectories, cfg.harbour)?;
    Ok((data, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_persistent_vessel_repeats_exactly() {
        let cfg = SynthConfig {
            n_vessels: 2,
            n_days: 10,
            n_groups: 2,
            p_stay: 1.0,
            noise_sd: 0.0,
            seasonal_amplitude: 0.0,
            seed: 3,
            ..Default::default()
        };
        let (data, _) = synth_fleet(&cfg).unwrap();
        for v in 0..2 {
            let days: Vec<&Trajectory> =
                data.trajectories.iter().filter(|t| t.vessel_id == vessel_name(v)).collect();
            for t in &days[1..] {
                assert_eq!(t.positions, days[0].positions);
            }
        }
    }

    #[test]
    fn single_group_shares_archetype() {
        let cfg = SynthConfig {
            n_vessels: 3,
            n_days: 1,
            n_groups: 1,
            noise_sd: 0.0,
            seed: 4,
            ..Default::default()
        };
        let (data, labels) = synth_fleet(&cfg).unwrap();
        assert!(labels.iter().all(|l| l.group == 0));
        // no noise: every vessel's day is the common archetype loop
        for t in &data.trajectories[1..] {
            assert_eq!(t.positions, data.trajectories[0].positions);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_vessels: 4,
            n_days: 6,
            n_groups: 2,
            p_stay: 0.5,
            noise_sd: 0.05,
            seasonal_amplitude: 0.3,
            seed: 9,
            ..Default::default()
        };
        let (a, la) = synth_fleet(&cfg).unwrap();
        let (b, lb) = synth_fleet(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let mut other = cfg.clone();
        other.seed = 10;
        let (c, _) = synth_fleet(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn endpoints_are_exactly_the_harbour() {
        let cfg = SynthConfig {
            n_vessels: 3,
            n_days: 4,
            n_groups: 3,
            noise_sd: 0.1,
            seed: 5,
            ..Default::default()
        };
        let (data, _) = synth_fleet(&cfg).unwrap();
        data.check_ports(0.0).unwrap();
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig { n_vessels: 2, n_groups: 3, ..Default::default() };
        assert!(matches!(synth_fleet(&cfg), Err(TrajError::InvalidConfig(_))));
        let cfg = SynthConfig { p_stay: 1.5, ..Default::default() };
        assert!(matches!(synth_fleet(&cfg), Err(TrajError::InvalidConfig(_))));
    }

    #[test]
    fn groups_are_round_robin_balanced() {
        let cfg = SynthConfig { n_vessels: 7, n_days: 1, n_groups: 3, seed: 1, ..Default::default() };
        let (_, labels) = synth_fleet(&cfg).unwrap();
        let counts = labels.iter().fold([0usize; 3], |mut acc, l| {
            acc[l.group] += 1;
            acc
        });
        assert_eq!(counts, [3, 2, 2]);
    }
}
