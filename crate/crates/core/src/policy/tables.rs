use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenGroup, Vocabulary};
use crate::error::{Error, Result};

pub const POLICY_TABLES_VERSION: u32 = 1;

/// Priors used for action slots the prompt leaves unspecified, indexed in
/// the order of the matching token group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultPriors {
    pub scheduler: Vec<f64>,
    pub num_ues: Vec<f64>,
    pub load: Vec<f64>,
    pub duration: Vec<f64>,
}

impl Default for DefaultPriors {
    /// Peaked on (PF, 5 UEs, 5 Mbps, 5 s).
    fn default() -> Self {
        Self {
            scheduler: vec![0.3, 0.7],
            num_ues: peaked(8, 2, 0.44),
            load: peaked(9, 3, 0.36),
            duration: peaked(6, 0, 0.5),
        }
    }
}

fn peaked(len: usize, at: usize, mass: f64) -> Vec<f64> {
    let rest = (1.0 - mass) / (len - 1) as f64;
    (0..len).map(|i| if i == at { mass } else { rest }).collect()
}

/// Everything that defines the surrogate policy. Serialised as a versioned
/// JSON document so the service and the harness load identical policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTables {
    pub version: u32,
    pub vocabulary: Vocabulary,
    /// Mass moved off a prompt-specified slot value, spread uniformly.
    pub eta: f64,
    pub default_priors: DefaultPriors,
    pub template_probs: Vec<f64>,
    pub synonym_probs: [Vec<f64>; 3],
    pub throughput_bucket_mbps: f64,
    pub delay_bucket_ms: f64,
    pub throughput_threshold_mbps: f64,
    pub delay_threshold_ms: f64,
    /// Relative slope (fraction of the mean per second) below which the
    /// delay trend counts as stable.
    pub trend_deadband_per_s: f64,
    /// Softmax temperature of the trend token around the dead-band.
    pub trend_temperature: f64,
    pub max_decode_len: usize,
}

impl Default for PolicyTables {
    fn default() -> Self {
        Self {
            version: POLICY_TABLES_VERSION,
            vocabulary: Vocabulary::standard(),
            eta: 0.05,
            default_priors: DefaultPriors::default(),
            template_probs: vec![0.4, 0.3, 0.2, 0.1],
            synonym_probs: [
                vec![0.5, 0.3, 0.2],
                vec![0.5, 0.3, 0.2],
                vec![0.5, 0.3, 0.2],
            ],
            throughput_bucket_mbps: 0.1,
            delay_bucket_ms: 0.1,
            throughput_threshold_mbps: 5.0,
            delay_threshold_ms: 15.0,
            trend_deadband_per_s: 0.01,
            trend_temperature: 0.01,
            max_decode_len: 64,
        }
    }
}

impl PolicyTables {
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != POLICY_TABLES_VERSION {
            return Err(Error::invalid(format!(
                "policy tables version {} is not supported",
                self.version
            )));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::invalid("eta must lie in [0, 1)"));
        }
        let v = &self.vocabulary;
        let checks: [(&str, &[f64], TokenGroup); 9] = [
            ("scheduler prior", &self.default_priors.scheduler, TokenGroup::Scheduler),
            ("num_ues prior", &self.default_priors.num_ues, TokenGroup::NumUes),
            ("load prior", &self.default_priors.load, TokenGroup::Load),
            ("duration prior", &self.default_priors.duration, TokenGroup::Duration),
            ("template probs", &self.template_probs, TokenGroup::Template),
            ("synonym 1 probs", &self.synonym_probs[0], TokenGroup::Synonym(0)),
            ("synonym 2 probs", &self.synonym_probs[1], TokenGroup::Synonym(1)),
            ("synonym 3 probs", &self.synonym_probs[2], TokenGroup::Synonym(2)),
            ("trend", &[1.0 / 3.0; 3], TokenGroup::Trend),
        ];
        for (name, probs, group) in checks {
            if probs.len() != v.group(group).len() {
                return Err(Error::invalid(format!(
                    "{name}: {} entries for a group of {}",
                    probs.len(),
                    v.group(group).len()
                )));
            }
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("{name}: not a distribution")));
            }
        }
        if self.trend_temperature <= 0.0 || self.max_decode_len == 0 {
            return Err(Error::invalid("trend temperature and max length must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tables: Self = serde_json::from_str(text)?;
        tables.validate()?;
        Ok(tables)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let t = PolicyTables::default();
        t.validate().unwrap();
        let back = PolicyTables::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn default_priors_peak_on_pf_5_5_5() {
        let p = DefaultPriors::default();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&p.scheduler), 1);
        assert_eq!(argmax(&p.num_ues) + 3, 5);
        assert_eq!(argmax(&p.load) + 2, 5);
        assert_eq!(argmax(&p.duration) + 5, 5);
    }

    #[test]
    fn rejects_wrong_version() {
        let mut t = PolicyTables::default();
        t.version = 9;
        assert!(PolicyTables::from_json(&t.to_json().unwrap()).is_err());
    }
}
