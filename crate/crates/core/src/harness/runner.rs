use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiments::{calibsize, riskcurves, simquality, table1, Workbench};
use super::export::{export_results, write_csv};
use crate::error::{Error, Result};

pub const EXPERIMENTS: [&str; 4] = ["table1", "riskcurves", "calibsize", "simquality"];

pub const TABLE1_HEADER: [&str; 7] = [
    "method",
    "kpi",
    "mae",
    "crosscorr_peak",
    "crossing_level_error",
    "records",
    "crosscorr_records",
];
pub const RISKCURVES_HEADER: [&str; 9] = [
    "method",
    "epsilon",
    "mean_set_loss",
    "mean_res",
    "mean_set_size",
    "k",
    "splits",
    "abstained",
    "violation_frequency",
];
pub const CALIBSIZE_HEADER: [&str; 7] = [
    "n_cal",
    "epsilon",
    "mean_set_loss",
    "mean_res",
    "mean_set_size",
    "splits",
    "abstained",
];
pub const SIMQUALITY_HEADER: [&str; 11] = [
    "level",
    "mae_throughput",
    "mae_delay",
    "cg_preferred_vs_ig",
    "cg_preferred_vs_sig",
    "epsilon",
    "mean_res",
    "mean_set_loss",
    "abstained",
    "splits",
    "oracle_exact",
];

/// What an experiment run wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub rows: usize,
    /// Per-record rows whose RES is undefined.
    pub flagged_rows: usize,
    pub notes: Vec<String>,
}

fn name_of(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs `name` on a prepared workbench and writes its CSV, per-record
/// exports and `<name>_manifest.json` into `out_dir`.
pub fn run_on(wb: &Workbench, name: &str, out_dir: &Path) -> Result<Manifest> {
    if !EXPERIMENTS.contains(&name) {
        return Err(Error::Usage(format!(
            "unknown experiment {name:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let csv_path = out_dir.join(format!("{name}.csv"));
    let mut files = vec![name_of(&csv_path)];
    let mut notes = Vec::new();
    let mut flagged_rows = 0;
    let rows = match name {
        "table1" => {
            let r = table1(wb)?;
            write_csv(&csv_path, &TABLE1_HEADER, &r.rows)?;
            let (j, c, f) = export_results(&r.records, &out_dir.join("table1_records"))?;
            files.extend([name_of(&j), name_of(&c)]);
            flagged_rows = f;
            notes.push(format!(
                "cross-correlation lag window {} sample(s) of 0.2 s; the 10 ms allowance is finer than the sampling period",
                wb.config.table1.max_lag
            ));
            notes.push("MAE in Mbps and ms on UE-averaged series over common windows".into());
            notes.push("cross-correlation averaged over records where all methods are non-constant".into());
            r.rows.len()
        }
        "riskcurves" => {
            let r = riskcurves(wb)?;
            write_csv(&csv_path, &RISKCURVES_HEADER, &r.rows)?;
            let (j, c, f) = export_results(&r.records, &out_dir.join("riskcurves_records"))?;
            files.extend([name_of(&j), name_of(&c)]);
            flagged_rows = f;
            notes.push("CCG means are over non-abstaining splits; violation_frequency is over all splits".into());
            notes.push("per-record exports cover the first split only".into());
            r.rows.len()
        }
        "calibsize" => {
            let r = calibsize(wb)?;
            write_csv(&csv_path, &CALIBSIZE_HEADER, &r)?;
            r.len()
        }
        "simquality" => {
            let r = simquality(wb)?;
            write_csv(&csv_path, &SIMQUALITY_HEADER, &r)?;
            r.len()
        }
        _ => unreachable!("checked above"),
    };
    let manifest_path = out_dir.join(format!("{name}_manifest.json"));
    files.push(name_of(&manifest_path));
    let manifest = Manifest {
        experiment: name.to_string(),
        seed: wb.seed,
        config: wb.config.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
        rows,
        flagged_rows,
        notes,
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Prepares the workbench from `config` and runs `name`.
pub fn run_experiment(name: &str, config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<Manifest> {
    if !EXPERIMENTS.contains(&name) {
        return Err(Error::Usage(format!(
            "unknown experiment {name:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        )));
    }
    let wb = Workbench::new(config.clone(), seed)?;
    run_on(&wb, name, out_dir)
}
