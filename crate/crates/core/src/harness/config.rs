use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abduction::{AbcConfig, NpeConfig, Temperature};
use crate::conformal::{FwerMethod, K_MAX};
use crate::envsim::FidelityLevel;
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbductionMethod {
    Abc,
    Npe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub records: usize,
    /// Loaded instead of generated when set.
    pub path: Option<String>,
    pub hidden_path: Option<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            records: 300,
            path: None,
            hidden_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbductionSection {
    pub method: AbductionMethod,
    pub abc_candidates: usize,
    pub npe_triplets: usize,
    pub npe_epochs: usize,
    /// A trained posterior to load instead of training one.
    pub npe_model: Option<String>,
}

impl Default for AbductionSection {
    fn default() -> Self {
        Self {
            method: AbductionMethod::Abc,
            abc_candidates: 256,
            npe_triplets: 4000,
            npe_epochs: NpeConfig::default().epochs,
            npe_model: None,
        }
    }
}

impl AbductionSection {
    pub fn abc(&self, twin: FidelityLevel) -> AbcConfig {
        AbcConfig {
            candidates: self.abc_candidates,
            temperature: Temperature::MedianDistance,
            fidelity: twin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub twin: FidelityLevel,
    pub k_max: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            twin: FidelityLevel::TWIN_DEFAULT,
            k_max: K_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Section {
    pub test_records: usize,
    pub max_lag: usize,
}

impl Default for Table1Section {
    fn default() -> Self {
        Self {
            test_records: 150,
            max_lag: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskCurvesSection {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub splits: usize,
    pub calibration_records: usize,
    pub k_values: Vec<usize>,
    pub fwer: FwerMethod,
}

impl Default for RiskCurvesSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            delta: 0.1,
            splits: 50,
            calibration_records: 150,
            k_values: (1..=10).collect(),
            fwer: FwerMethod::Bonferroni,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSizeSection {
    pub epsilon: f64,
    pub n_cal: Vec<usize>,
    pub splits: usize,
    pub test_records: usize,
}

impl Default for CalibSizeSection {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            n_cal: vec![5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
            splits: 20,
            test_records: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimQualitySection {
    pub levels: Vec<FidelityLevel>,
    pub epsilon: f64,
    pub splits: usize,
}

impl Default for SimQualitySection {
    fn default() -> Self {
        Self {
            levels: FidelityLevel::ALL.to_vec(),
            epsilon: 0.5,
            splits: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub epsilon: f64,
    pub delta: f64,
    /// Calibration uses the first `records` dataset records.
    pub records: usize,
    pub fwer: FwerMethod,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            delta: 0.1,
            records: 150,
            fwer: FwerMethod::Bonferroni,
        }
    }
}

/// Versioned experiment configuration. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub abduction: AbductionSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub table1: Table1Section,
    #[serde(default)]
    pub riskcurves: RiskCurvesSection,
    #[serde(default)]
    pub calibsize: CalibSizeSection,
    #[serde(default)]
    pub simquality: SimQualitySection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            dataset: DatasetSection::default(),
            abduction: AbductionSection::default(),
            generation: GenerationSection::default(),
            table1: Table1Section::default(),
            riskcurves: RiskCurvesSection::default(),
            calibsize: CalibSizeSection::default(),
            simquality: SimQualitySection::default(),
            calibrate: CalibrateSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        let n = self.dataset.records;
        if n < 2 {
            return bad("dataset.records must be at least 2".into());
        }
        if self.generation.k_max == 0 {
            return bad("generation.k_max must be positive".into());
        }
        if self.table1.test_records == 0 || self.table1.test_records > n {
            return bad(format!("table1.test_records must be in 1..={n}"));
        }
        let rc = &self.riskcurves;
        if rc.calibration_records == 0 || rc.calibration_records >= n {
            return bad(format!("riskcurves.calibration_records must be in 1..{n}"));
        }
        if rc.k_values.iter().any(|&k| k == 0 || k > self.generation.k_max) {
            return bad("riskcurves.k_values must lie in 1..=k_max".into());
        }
        let eps_ok = |e: f64| e > 0.0 && e < 1.0;
        if !rc.epsilons.iter().copied().all(eps_ok) || !eps_ok(rc.delta) {
            return bad("epsilons and delta must lie in (0, 1)".into());
        }
        let cs = &self.calibsize;
        if !eps_ok(cs.epsilon) || cs.test_records == 0 {
            return bad("calibsize.epsilon must lie in (0, 1) with test_records > 0".into());
        }
        if cs.n_cal.iter().any(|&m| m == 0 || m + cs.test_records > n) {
            return bad(format!("calibsize n_cal + test_records must not exceed {n}"));
        }
        if !eps_ok(self.simquality.epsilon) || self.simquality.levels.is_empty() {
            return bad("simquality needs levels and an epsilon in (0, 1)".into());
        }
        let cal = &self.calibrate;
        if !eps_ok(cal.epsilon) || !eps_ok(cal.delta) || cal.records == 0 || cal.records > n {
            return bad(format!("calibrate needs epsilon and delta in (0, 1) and records in 1..={n}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_roundtrip() {
        let c = ExperimentConfig::from_toml("version = 1\n").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(ExperimentConfig::from_toml("version = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("version = 1\nbogus = 3\n").is_err());
        let c = ExperimentConfig::from_toml("version = 1\n[generation]\ntwin = 4\n").unwrap();
        assert_eq!(c.generation.twin, FidelityLevel::Q4);
    }
}
