use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Abductor, NoisePosterior};
use crate::envsim::{run_environment, sample_exogenous_prior, ActionConfig, ExogenousNoise, FidelityLevel, KpiSeries};
use crate::error::{Error, Result};
use crate::rng::{derived, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    /// Median candidate distance.
    MedianDistance,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub candidates: usize,
    pub temperature: Temperature,
    pub fidelity: FidelityLevel,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            candidates: 256,
            temperature: Temperature::MedianDistance,
            fidelity: FidelityLevel::TWIN_DEFAULT,
        }
    }
}

/// Prior candidates with softmin weights over their simulated distance to
/// the observation.
#[derive(Debug, Clone)]
pub struct AbcPosterior {
    candidates: Vec<ExogenousNoise>,
    distances: Vec<f64>,
    weights: Vec<f64>,
}

fn pooled_std<'a>(series: impl Iterator<Item = &'a Vec<f64>>) -> f64 {
    let vals: Vec<f64> = series.flatten().copied().collect();
    if vals.len() < 2 {
        return 1.0;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
    if s > 1e-9 {
        s
    } else {
        1.0
    }
}

fn scaled_mae(a: &[Vec<f64>], b: &[Vec<f64>], scale: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            sum += (u - v).abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64 / scale
    }
}

impl AbcPosterior {
    /// Simulates `cfg.candidates` prior draws and scores each against `kpis`.
    pub fn fit(action: &ActionConfig, kpis: &KpiSeries, cfg: &AbcConfig, rng: &mut SimRng) -> Result<Self> {
        if cfg.candidates == 0 {
            return Err(Error::invalid("ABC needs at least one candidate"));
        }
        let base: u64 = rng.random();
        let sims: Vec<(ExogenousNoise, KpiSeries)> = (0..cfg.candidates)
            .into_par_iter()
            .map(|j| {
                let u = sample_exogenous_prior(&mut derived(base, "abc", j as u64));
                let z = run_environment(action, &u, cfg.fidelity)?;
                Ok((u, z))
            })
            .collect::<Result<_>>()?;
        if sims[0].1.num_ues() != kpis.num_ues() || sims[0].1.num_windows() != kpis.num_windows() {
            return Err(Error::Abduction("observed KPIs do not match the action's shape".into()));
        }
        let thr_scale = pooled_std(sims.iter().flat_map(|(_, z)| z.throughput_mbps.iter()));
        let dly_scale = pooled_std(sims.iter().flat_map(|(_, z)| z.delay_ms.iter()));
        let distances = sims
            .iter()
            .map(|(_, z)| {
                0.5 * (scaled_mae(&z.throughput_mbps, &kpis.throughput_mbps, thr_scale)
                    + scaled_mae(&z.delay_ms, &kpis.delay_ms, dly_scale))
            })
            .collect();
        let candidates = sims.into_iter().map(|(u, _)| u).collect();
        Self::from_scored(candidates, distances, cfg.temperature)
    }

    /// Softmin weights `exp(-(d - d_min) / T)`. A zero temperature puts all
    /// mass on the closest candidate (lowest index on ties).
    pub fn from_scored(candidates: Vec<ExogenousNoise>, distances: Vec<f64>, temperature: Temperature) -> Result<Self> {
        if candidates.is_empty() || candidates.len() != distances.len() {
            return Err(Error::invalid("candidate and distance lists must be non-empty and equal length"));
        }
        if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("distances must be finite and non-negative"));
        }
        let t = match temperature {
            Temperature::Fixed(t) => t,
            Temperature::MedianDistance => {
                let mut s = distances.clone();
                s.sort_by(f64::total_cmp);
                s[s.len() / 2]
            }
        };
        let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let weights = if t > 0.0 {
            distances.iter().map(|d| (-(d - d_min) / t).exp()).collect()
        } else {
            let best = distances.iter().position(|&d| d == d_min).expect("non-empty");
            (0..distances.len()).map(|i| f64::from(i == best)).collect()
        };
        Ok(Self {
            candidates,
            distances,
            weights,
        })
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl NoisePosterior for AbcPosterior {
    fn sample(&self, rng: &mut SimRng) -> Result<ExogenousNoise> {
        let idx = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::Abduction(e.to_string()))?
            .sample(rng);
        Ok(self.candidates[idx].clone())
    }
}

impl Abductor for AbcConfig {
    fn condition<'a>(
        &'a self,
        action: &ActionConfig,
        kpis: &KpiSeries,
        rng: &mut SimRng,
    ) -> Result<Box<dyn NoisePosterior + 'a>> {
        Ok(Box::new(AbcPosterior::fit(action, kpis, self, rng)?))
    }
}

pub fn abc_posterior_sample(
    action: &ActionConfig,
    kpis: &KpiSeries,
    cfg: &AbcConfig,
    rng: &mut SimRng,
) -> Result<ExogenousNoise> {
    AbcPosterior::fit(action, kpis, cfg, rng)?.sample(rng)
}
