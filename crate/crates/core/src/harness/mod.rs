//! Evaluation metrics and the experiment runner.
//!
//! Experiments share a [`Workbench`]: the dataset, the abductor and the CG
//! candidate pools per twin fidelity, which are built once and reused.

mod calibration;
mod config;
mod experiments;
mod export;
mod metrics;
mod runner;

pub use calibration::{calibrate_dataset, CalibrationFile, CALIBRATION_VERSION};
pub use config::{
    AbductionMethod, AbductionSection, CalibSizeSection, CalibrateSection, DatasetSection, ExperimentConfig, GenerationSection,
    RiskCurvesSection, SimQualitySection, Table1Section, CONFIG_VERSION,
};
pub use experiments::{
    calibsize, grid_table, oracle_exact_fraction, riskcurves, score_series, simquality, table1, CalibSizeRow,
    RecordPool, RiskCurvesResult, RiskRow, SeriesScores, SimQualityRow, Table1Result, Table1Row, Workbench, KPIS,
};
pub use export::{export_results, read_eval_records, write_csv, EvalRecord, Method, EVAL_HEADER};
pub use metrics::{crosscorr_peak, crossing_level_error, mae, relative_excess_samples};
pub use runner::{
    run_experiment, run_on, Manifest, CALIBSIZE_HEADER, EXPERIMENTS, RISKCURVES_HEADER, SIMQUALITY_HEADER,
    TABLE1_HEADER,
};
