//! Calibrated rule artifact shared by the CLI and the service.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::AbductionSection;
use super::experiments::{grid_table, Workbench};
use crate::conformal::{calibrate_on, CalibrationOutcome, CalibrationRecord, LambdaConfig, LambdaGrid};
use crate::envsim::FidelityLevel;
use crate::error::{Error, Result};

pub const CALIBRATION_VERSION: u32 = 1;

/// A calibrated grid with its per-configuration statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub version: u32,
    pub seed: u64,
    pub twin: FidelityLevel,
    pub k_max: usize,
    pub abduction: AbductionSection,
    pub grid: LambdaGrid,
    pub outcome: CalibrationOutcome,
    pub records: Vec<CalibrationRecord>,
}

impl CalibrationFile {
    /// The certified configuration, `None` on abstention.
    pub fn lambda(&self) -> Option<LambdaConfig> {
        self.outcome.lambda
    }

    /// Smallest p-value over the grid.
    pub fn min_p_value(&self) -> Option<f64> {
        self.records.iter().map(|r| r.p_value).min_by(f64::total_cmp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.version != CALIBRATION_VERSION {
            return Err(Error::Config(format!(
                "unsupported calibration version {} (expected {CALIBRATION_VERSION})",
                f.version
            )));
        }
        f.grid.validate()?;
        if f.records.len() != f.grid.configs.len() {
            return Err(Error::Config("calibration records do not match the grid".into()));
        }
        Ok(f)
    }
}

/// Calibrates the standard grid on the first configured records.
pub fn calibrate_dataset(wb: &Workbench) -> Result<CalibrationFile> {
    let c = &wb.config.calibrate;
    let twin = wb.config.generation.twin;
    let mut grid = LambdaGrid::standard(c.epsilon, c.delta)?;
    grid.method = c.fwer.clone();
    grid.validate()?;
    let table = grid_table(wb, twin)?;
    let rows: Vec<usize> = (0..c.records).collect();
    let (outcome, records) = calibrate_on(&grid, &table, &rows)?;
    Ok(CalibrationFile {
        version: CALIBRATION_VERSION,
        seed: wb.seed,
        twin,
        k_max: wb.config.generation.k_max,
        abduction: wb.config.abduction.clone(),
        grid,
        outcome,
        records,
    })
}
