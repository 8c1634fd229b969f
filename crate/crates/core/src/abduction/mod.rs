//! Abduction of the environment's exogenous noise from a factual
//! (action, KPI) pair.
//!
//! Two samplers share the [`Abductor`] interface: an amortized neural
//! posterior ([`PosteriorModel`]) and a likelihood-free ABC sampler
//! ([`AbcConfig`]). Conditioning on one pair yields a [`NoisePosterior`] that
//! can be sampled repeatedly without re-running any setup work.

mod abc;
mod features;
mod mlp;
mod npe;

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envsim::{run_environment, sample_exogenous_prior, ActionConfig, ExogenousNoise, FidelityLevel, KpiSeries};
use crate::error::Result;
use crate::rng::{derived, SimRng};

pub use abc::{abc_posterior_sample, AbcConfig, AbcPosterior, Temperature};
pub use features::{summarize_pair, SummaryFeatures, FEATURE_DIM};
pub use mlp::Mlp;
pub use npe::{
    posterior_sample, train_amortized_posterior, NpeConfig, PosteriorModel, TrainingReport,
    POSTERIOR_MODEL_VERSION,
};

/// A distribution over exogenous noise conditioned on one factual pair.
pub trait NoisePosterior: Send + Sync {
    fn sample(&self, rng: &mut SimRng) -> Result<ExogenousNoise>;
}

/// Builds a [`NoisePosterior`] from a factual pair.
pub trait Abductor: Send + Sync {
    fn condition<'a>(
        &'a self,
        action: &ActionConfig,
        kpis: &KpiSeries,
        rng: &mut SimRng,
    ) -> Result<Box<dyn NoisePosterior + 'a>>;
}

/// Ignores the data and samples the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriorAbductor;

impl NoisePosterior for PriorAbductor {
    fn sample(&self, rng: &mut SimRng) -> Result<ExogenousNoise> {
        Ok(sample_exogenous_prior(rng))
    }
}

impl Abductor for PriorAbductor {
    fn condition<'a>(&'a self, _: &ActionConfig, _: &KpiSeries, _: &mut SimRng) -> Result<Box<dyn NoisePosterior + 'a>> {
        Ok(Box::new(PriorAbductor))
    }
}

/// Test hook: always returns the given noise.
#[derive(Debug, Clone)]
pub struct FixedNoise(pub ExogenousNoise);

impl NoisePosterior for FixedNoise {
    fn sample(&self, _: &mut SimRng) -> Result<ExogenousNoise> {
        Ok(self.0.clone())
    }
}

impl Abductor for FixedNoise {
    fn condition<'a>(&'a self, _: &ActionConfig, _: &KpiSeries, _: &mut SimRng) -> Result<Box<dyn NoisePosterior + 'a>> {
        Ok(Box::new(self.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    pub action: ActionConfig,
    pub kpis: KpiSeries,
    pub noise: ExogenousNoise,
}

/// Draws `n` (action, noise) pairs from the prior and simulates each at
/// `fidelity`. Records use independent sub-streams, so the result does not
/// depend on the thread count.
pub fn generate_training_triplets<R: Rng + ?Sized>(
    n: usize,
    fidelity: FidelityLevel,
    rng: &mut R,
) -> Result<Vec<TrainingTriplet>> {
    let base: u64 = rng.random();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut r = derived(base, "triplet", j as u64);
            let action = ActionConfig::sample_uniform(&mut r);
            let noise = sample_exogenous_prior(&mut r);
            let kpis = run_environment(&action, &noise, fidelity)?;
            Ok(TrainingTriplet { action, kpis, noise })
        })
        .collect()
}

pub fn write_triplets_jsonl<W: Write>(triplets: &[TrainingTriplet], mut w: W) -> Result<()> {
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_triplets_jsonl<R: BufRead>(r: R) -> Result<Vec<TrainingTriplet>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
