use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CG")]
    Cg,
    #[serde(rename = "IG")]
    Ig,
    #[serde(rename = "SIG")]
    Sig,
    #[serde(rename = "CCG")]
    Ccg,
    #[serde(rename = "k-CG")]
    KCg,
}

/// One evaluated test record. Fields a method does not produce stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record_id: String,
    pub method: Method,
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    pub mae_throughput: Option<f64>,
    pub mae_delay: Option<f64>,
    pub xcorr_throughput: Option<f64>,
    pub xcorr_delay: Option<f64>,
    pub cle_throughput: Option<f64>,
    pub cle_delay: Option<f64>,
    pub set_loss: Option<u8>,
    pub set_size: Option<usize>,
    pub k_stop: Option<usize>,
    pub k_star: Option<usize>,
    pub res: Option<f64>,
    /// Set when a set-valued method never produced an admissible member.
    pub res_undefined: bool,
}

impl EvalRecord {
    pub fn new(record_id: &str, method: Method) -> Self {
        Self {
            record_id: record_id.to_string(),
            method,
            epsilon: None,
            k: None,
            mae_throughput: None,
            mae_delay: None,
            xcorr_throughput: None,
            xcorr_delay: None,
            cle_throughput: None,
            cle_delay: None,
            set_loss: None,
            set_size: None,
            k_stop: None,
            k_star: None,
            res: None,
            res_undefined: false,
        }
    }
}

pub const EVAL_HEADER: [&str; 16] = [
    "record_id",
    "method",
    "epsilon",
    "k",
    "mae_throughput",
    "mae_delay",
    "xcorr_throughput",
    "xcorr_delay",
    "cle_throughput",
    "cle_delay",
    "set_loss",
    "set_size",
    "k_stop",
    "k_star",
    "res",
    "res_undefined",
];

/// Writes `rows` as CSV with `header`, even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.jsonl` and `<stem>.csv`; returns the paths and the number
/// of rows flagged with an undefined RES.
pub fn export_results(records: &[EvalRecord], stem: &Path) -> Result<(PathBuf, PathBuf, usize)> {
    let jsonl = stem.with_extension("jsonl");
    let csv_path = stem.with_extension("csv");
    let mut w = BufWriter::new(File::create(&jsonl)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    write_csv(&csv_path, &EVAL_HEADER, records)?;
    Ok((jsonl, csv_path, records.iter().filter(|r| r.res_undefined).count()))
}

pub fn read_eval_records<R: BufRead>(r: R) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
