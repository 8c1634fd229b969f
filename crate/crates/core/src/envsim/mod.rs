//! Single-cell radio scheduler simulator.
//!
//! [`run_environment`] is a deterministic function of an action
//! configuration, the exogenous noise and a fidelity level. The highest
//! level ([`FidelityLevel::Q4`]) is the "real" environment; lower levels act
//! as degraded digital twins.

mod channel;
mod kpi;
mod sim;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channel::{
    capped_rate_bits_per_tti, path_loss_db, ue_distance_m, ChannelConstants, CHANNEL,
};
pub use kpi::{KpiSeries, KpiSummary, WINDOW_S};
pub use sim::{
    run_environment, run_environment_with_hooks, scheduler_select, SchedulerState, SimHooks,
};

/// Largest UE count an action may request; noise vectors are at least this long.
pub const MAX_UES: usize = 10;
pub const SHADOW_STD_DB: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheduler {
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "PF")]
    Pf,
}

impl Scheduler {
    pub const ALL: [Scheduler; 2] = [Scheduler::Rr, Scheduler::Pf];

    pub fn index(self) -> usize {
        match self {
            Scheduler::Rr => 0,
            Scheduler::Pf => 1,
        }
    }

    /// Inverse of [`Scheduler::index`]; anything other than 1 maps to RR.
    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Scheduler::Pf
        } else {
            Scheduler::Rr
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Rr => "RR",
            Scheduler::Pf => "PF",
        }
    }
}

impl std::fmt::Display for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RR" | "ROUND-ROBIN" | "ROUND ROBIN" => Ok(Scheduler::Rr),
            "PF" | "PROPORTIONAL FAIR" | "PROPORTIONAL-FAIR" => Ok(Scheduler::Pf),
            _ => Err(Error::parse(s, "unknown scheduler")),
        }
    }
}

pub const NUM_UES_RANGE: (u32, u32) = (3, 10);
pub const LOAD_RANGE_MBPS: (f64, f64) = (2.0, 10.0);
pub const DURATION_RANGE_S: (f64, f64) = (5.0, 10.0);

/// Structured action: what the agent asks the scheduler to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionConfig {
    pub scheduler: Scheduler,
    pub num_ues: u32,
    /// Offered load per UE.
    pub load_mbps: f64,
    pub duration_s: f64,
}

impl ActionConfig {
    pub fn new(scheduler: Scheduler, num_ues: u32, load_mbps: f64, duration_s: f64) -> Result<Self> {
        let a = Self {
            scheduler,
            num_ues,
            load_mbps,
            duration_s,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = NUM_UES_RANGE;
        if !(lo..=hi).contains(&self.num_ues) {
            return Err(Error::invalid(format!("num_ues {} outside [{lo}, {hi}]", self.num_ues)));
        }
        let (lo, hi) = LOAD_RANGE_MBPS;
        if !(self.load_mbps >= lo && self.load_mbps <= hi) {
            return Err(Error::invalid(format!("load {} Mbps outside [{lo}, {hi}]", self.load_mbps)));
        }
        let (lo, hi) = DURATION_RANGE_S;
        if !(self.duration_s >= lo && self.duration_s <= hi) {
            return Err(Error::invalid(format!("duration {} s outside [{lo}, {hi}]", self.duration_s)));
        }
        Ok(())
    }

    /// Number of 0.2 s KPI windows the run produces.
    pub fn num_windows(&self) -> usize {
        (self.duration_s / WINDOW_S + 1e-9).floor() as usize
    }

    /// Uniform draw over the admissible ranges (integer loads and durations,
    /// matching what prompts can express).
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            scheduler: Scheduler::from_index(rng.random_range(0..2)),
            num_ues: rng.random_range(NUM_UES_RANGE.0..=NUM_UES_RANGE.1),
            load_mbps: f64::from(rng.random_range(2u32..=10)),
            duration_s: f64::from(rng.random_range(5u32..=10)),
        }
    }
}

/// Latent randomness of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousNoise {
    pub placement_seed: u64,
    /// Extra per-UE path loss in dB (positive means a weaker link).
    pub shadow_db: Vec<f64>,
    pub fading_seed: u64,
    pub traffic_seed: u64,
}

impl ExogenousNoise {
    pub fn validate(&self) -> Result<()> {
        if self.shadow_db.len() < MAX_UES {
            return Err(Error::invalid(format!(
                "shadow vector has {} entries, need at least {MAX_UES}",
                self.shadow_db.len()
            )));
        }
        if self.shadow_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("shadow vector has non-finite entries"));
        }
        Ok(())
    }
}

pub fn sample_exogenous_prior<R: Rng + ?Sized>(rng: &mut R) -> ExogenousNoise {
    let normal = Normal::new(0.0, SHADOW_STD_DB).expect("fixed positive std");
    let placement_seed = rng.random();
    let shadow_db = (0..MAX_UES).map(|_| normal.sample(rng)).collect();
    ExogenousNoise {
        placement_seed,
        shadow_db,
        fading_seed: rng.random(),
        traffic_seed: rng.random(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FidelityLevel {
    /// Averaged link gain, fluid traffic.
    Q1,
    /// Adds log-normal shadowing.
    Q2,
    /// Adds Rayleigh block fading.
    Q3,
    /// Adds packet-level Poisson traffic and FIFO queueing.
    Q4,
}

impl FidelityLevel {
    pub const ALL: [FidelityLevel; 4] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4];
    pub const REAL: FidelityLevel = Self::Q4;
    pub const TWIN_DEFAULT: FidelityLevel = Self::Q2;

    pub fn level(self) -> u8 {
        self as u8 + 1
    }

    pub fn shadowing(self) -> bool {
        self >= Self::Q2
    }

    pub fn fading(self) -> bool {
        self >= Self::Q3
    }

    pub fn packet_queueing(self) -> bool {
        self == Self::Q4
    }
}

impl TryFrom<u8> for FidelityLevel {
    type Error = Error;

    fn try_from(q: u8) -> Result<Self> {
        match q {
            1 => Ok(Self::Q1),
            2 => Ok(Self::Q2),
            3 => Ok(Self::Q3),
            4 => Ok(Self::Q4),
            _ => Err(Error::invalid(format!("fidelity level {q} not in 1..=4"))),
        }
    }
}

impl From<FidelityLevel> for u8 {
    fn from(q: FidelityLevel) -> u8 {
        q.level()
    }
}

impl std::fmt::Display for FidelityLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}", self.level())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn prior_is_deterministic_and_has_the_right_moments() {
        assert_eq!(sample_exogenous_prior(&mut seeded(4)), sample_exogenous_prior(&mut seeded(4)));
        let mut rng = seeded(11);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_exogenous_prior(&mut rng).shadow_db[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.3, "mean {mean}");
        assert!((var.sqrt() - 8.0).abs() < 0.3, "std {}", var.sqrt());
    }

    #[test]
    fn action_ranges() {
        assert!(ActionConfig::new(Scheduler::Pf, 3, 2.0, 5.0).is_ok());
        assert!(ActionConfig::new(Scheduler::Pf, 2, 2.0, 5.0).is_err());
        assert!(ActionConfig::new(Scheduler::Pf, 3, 10.5, 5.0).is_err());
        assert!(ActionConfig::new(Scheduler::Pf, 3, f64::NAN, 5.0).is_err());
        assert!(ActionConfig::new(Scheduler::Pf, 3, 2.0, 11.0).is_err());
        assert_eq!(ActionConfig::new(Scheduler::Rr, 3, 2.0, 7.0).unwrap().num_windows(), 35);
    }

    #[test]
    fn fidelity_roundtrip() {
        for q in FidelityLevel::ALL {
            let s = serde_json::to_string(&q).unwrap();
            assert_eq!(serde_json::from_str::<FidelityLevel>(&s).unwrap(), q);
        }
        assert!(serde_json::from_str::<FidelityLevel>("5").is_err());
        assert_eq!("pf".parse::<Scheduler>().unwrap(), Scheduler::Pf);
    }
}
