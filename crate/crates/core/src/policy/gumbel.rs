use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Next-token probabilities over the whole vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Log-probability of `index`; `-inf` for zero mass.
    pub fn log_prob(&self, index: usize) -> f64 {
        self.probs.get(index).map_or(f64::NEG_INFINITY, |p| p.ln())
    }
}

/// One position's worth of i.i.d. standard Gumbel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GumbelNoiseVector(Vec<f64>);

impl GumbelNoiseVector {
    pub fn new(noise: Vec<f64>) -> Result<Self> {
        if noise.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid("Gumbel noise must be finite"));
        }
        Ok(Self(noise))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `vocab_size` values `-ln(-ln u)` with `u ~ U(0, 1)` open on both ends.
pub fn sample_gumbel_vector<R: Rng + ?Sized>(
    rng: &mut R,
    vocab_size: usize,
) -> Result<GumbelNoiseVector> {
    if vocab_size == 0 {
        return Err(Error::invalid("vocabulary size must be at least 1"));
    }
    let noise = (0..vocab_size)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect();
    Ok(GumbelNoiseVector(noise))
}

/// `argmax_v { ln p_v + u_v }`. Zero-probability entries never win and ties
/// go to the lowest index.
pub fn gumbel_max_select(dist: &TokenDistribution, noise: &GumbelNoiseVector) -> Result<usize> {
    if dist.len() != noise.len() {
        return Err(Error::invalid(format!(
            "distribution has {} entries but noise has {}",
            dist.len(),
            noise.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (v, (&p, &u)) in dist.probs.iter().zip(&noise.0).enumerate() {
        if p <= 0.0 {
            continue;
        }
        let score = p.ln() + u;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((v, score));
        }
    }
    best.map(|(v, _)| v)
        .ok_or_else(|| Error::invalid("distribution has no positive mass"))
}
