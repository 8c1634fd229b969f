use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::pool::{evaluate_grid, CandidatePool, GridTable};
use super::LambdaConfig;
use crate::error::{Error, Result};
use crate::harness::relative_excess_samples;
use crate::serde_ext::ext_f64;

/// Weight of the mean relative excess samples in the selection objective.
pub const SELECTION_GAMMA: f64 = 1.0;

/// Family-wise error control over the grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FwerMethod {
    Bonferroni,
    /// Test grid indices in `order`, stopping at the first non-rejection.
    FixedSequence { order: Vec<usize> },
}

/// Candidate configurations plus the target risk and outage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub configs: Vec<LambdaConfig>,
    pub epsilon: f64,
    pub delta: f64,
    pub method: FwerMethod,
}

impl LambdaGrid {
    pub fn new(configs: Vec<LambdaConfig>, epsilon: f64, delta: f64, method: FwerMethod) -> Result<Self> {
        let g = Self {
            configs,
            epsilon,
            delta,
            method,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} = {v} outside (0, 1)")));
            }
        }
        let mut seen = HashSet::new();
        for c in &self.configs {
            c.validate()?;
            let key = (c.quality_min.to_bits(), c.similarity_max.to_bits(), c.confidence_stop.to_bits());
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate grid point {c:?}")));
            }
        }
        if let FwerMethod::FixedSequence { order } = &self.method {
            let mut used = HashSet::new();
            for &i in order {
                if i >= self.configs.len() || !used.insert(i) {
                    return Err(Error::invalid(format!("bad fixed-sequence index {i}")));
                }
            }
        }
        Ok(())
    }

    /// Cartesian product of threshold lists, quality varying slowest.
    pub fn product(quality: &[f64], similarity: &[f64], stop: &[f64], epsilon: f64, delta: f64) -> Result<Self> {
        let mut configs = Vec::new();
        for &q in quality {
            for &s in similarity {
                for &f in stop {
                    configs.push(LambdaConfig::new(q, s, f)?);
                }
            }
        }
        Self::new(configs, epsilon, delta, FwerMethod::Bonferroni)
    }

    /// The grid used by the experiments and the service.
    pub fn standard(epsilon: f64, delta: f64) -> Result<Self> {
        Self::product(
            &[f64::NEG_INFINITY, -0.40, -0.30],
            &[0.8, 0.9, 1.0],
            &[
                f64::NEG_INFINITY,
                -0.40,
                -0.35,
                -0.30,
                -0.27,
                -0.25,
                -0.23,
                -0.21,
                -0.19,
                f64::INFINITY,
            ],
            epsilon,
            delta,
        )
    }
}

/// Calibration statistics of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub index: usize,
    pub lambda: LambdaConfig,
    pub n: usize,
    pub failures: usize,
    pub risk: f64,
    pub p_value: f64,
    pub mean_set_size: f64,
    /// Mean relative excess samples over records with an admissible member.
    pub mean_res: Option<f64>,
    /// Records without an admissible member (RES undefined).
    pub res_undefined: usize,
}

/// Result of calibration: the certified set and the chosen configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    pub valid: Vec<usize>,
    pub chosen: Option<usize>,
    pub lambda: Option<LambdaConfig>,
    pub abstained: bool,
    /// Selection objective of the chosen configuration.
    #[serde(with = "ext_f64")]
    pub objective: f64,
}

/// `P(Binomial(n, epsilon) <= failures)`, summed in log space.
pub fn binomial_pvalue(failures: usize, n: usize, epsilon: f64) -> Result<f64> {
    if failures > n {
        return Err(Error::invalid(format!("failures {failures} exceed n = {n}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if failures == n {
        return Ok(1.0);
    }
    let log_q = (-epsilon).ln_1p();
    let log_ratio = epsilon.ln() - log_q;
    // log pmf(k+1) = log pmf(k) + ln((n-k)/(k+1)) + ln(eps/(1-eps))
    let mut log_pmf = n as f64 * log_q;
    let mut terms = Vec::with_capacity(failures + 1);
    terms.push(log_pmf);
    for k in 0..failures {
        log_pmf += ((n - k) as f64 / (k + 1) as f64).ln() + log_ratio;
        terms.push(log_pmf);
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    Ok((m + s.ln()).exp().min(1.0))
}

/// `(risk, failures)` of one configuration over the pools.
pub fn empirical_risk(lambda: &LambdaConfig, pools: &[CandidatePool], k_max: usize) -> Result<(f64, usize)> {
    if pools.is_empty() {
        return Err(Error::invalid("no calibration records"));
    }
    let mut failures = 0;
    for p in pools {
        failures += usize::from(p.run(lambda, k_max)?.loss());
    }
    Ok((failures as f64 / pools.len() as f64, failures))
}

/// Grid indices whose null `risk > epsilon` is rejected under FWER control.
pub fn fwer_valid_set(records: &[CalibrationRecord], delta: f64, method: &FwerMethod) -> Vec<usize> {
    match method {
        FwerMethod::Bonferroni => {
            let threshold = delta / records.len().max(1) as f64;
            records.iter().filter(|r| r.p_value < threshold).map(|r| r.index).collect()
        }
        FwerMethod::FixedSequence { order } => {
            let mut valid = Vec::new();
            for &i in order {
                match records.iter().find(|r| r.index == i) {
                    Some(r) if r.p_value < delta => valid.push(i),
                    _ => break,
                }
            }
            valid
        }
    }
}

/// Minimises mean set size plus `gamma` times mean RES over the valid set;
/// ties go to the smaller set size, then the earlier grid index.
pub fn select_configuration(
    grid: &LambdaGrid,
    valid: &[usize],
    records: &[CalibrationRecord],
    gamma: f64,
) -> CalibrationOutcome {
    let n = records.first().map_or(0, |r| r.n);
    let mut best: Option<(&CalibrationRecord, f64)> = None;
    for &i in valid {
        let Some(r) = records.iter().find(|r| r.index == i) else {
            continue;
        };
        let obj = r.mean_set_size + gamma * r.mean_res.unwrap_or(f64::INFINITY);
        let better = match best {
            None => true,
            Some((b, bo)) => {
                obj < bo
                    || (obj == bo
                        && (r.mean_set_size < b.mean_set_size || (r.mean_set_size == b.mean_set_size && r.index < b.index)))
            }
        };
        if better {
            best = Some((r, obj));
        }
    }
    let mut valid = valid.to_vec();
    valid.sort_unstable();
    CalibrationOutcome {
        epsilon: grid.epsilon,
        delta: grid.delta,
        n,
        valid,
        chosen: best.map(|(r, _)| r.index),
        lambda: best.map(|(r, _)| r.lambda),
        abstained: best.is_none(),
        objective: best.map_or(f64::INFINITY, |(_, o)| o),
    }
}

/// Per-configuration statistics over the records `rows` of `table`.
pub fn calibration_records(grid: &LambdaGrid, table: &GridTable, rows: &[usize]) -> Result<Vec<CalibrationRecord>> {
    if rows.is_empty() {
        return Err(Error::invalid("no calibration records"));
    }
    if table.grid != grid.configs {
        return Err(Error::invalid("grid table was built for a different grid"));
    }
    let n = rows.len();
    table
        .cells
        .iter()
        .enumerate()
        .map(|(index, col)| {
            let mut failures = 0;
            let mut size = 0usize;
            let mut res_sum = 0.0;
            let mut res_n = 0usize;
            for &r in rows {
                let o = col
                    .get(r)
                    .ok_or_else(|| Error::invalid(format!("record {r} outside the grid table")))?;
                failures += usize::from(o.loss());
                size += o.size();
                if let Some(res) = relative_excess_samples(o.k_stop, o.k_star)? {
                    res_sum += res;
                    res_n += 1;
                }
            }
            let risk = failures as f64 / n as f64;
            Ok(CalibrationRecord {
                index,
                lambda: grid.configs[index],
                n,
                failures,
                risk,
                p_value: binomial_pvalue(failures, n, grid.epsilon)?,
                mean_set_size: size as f64 / n as f64,
                mean_res: (res_n > 0).then(|| res_sum / res_n as f64),
                res_undefined: n - res_n,
            })
        })
        .collect()
}

/// Calibration on a subset of a precomputed grid table.
pub fn calibrate_on(
    grid: &LambdaGrid,
    table: &GridTable,
    rows: &[usize],
) -> Result<(CalibrationOutcome, Vec<CalibrationRecord>)> {
    grid.validate()?;
    let records = calibration_records(grid, table, rows)?;
    let valid = fwer_valid_set(&records, grid.delta, &grid.method);
    Ok((select_configuration(grid, &valid, &records, SELECTION_GAMMA), records))
}

/// Empirical risks, p-values, FWER control and selection in one call.
pub fn calibrate(
    grid: &LambdaGrid,
    pools: &[CandidatePool],
    k_max: usize,
) -> Result<(CalibrationOutcome, Vec<CalibrationRecord>)> {
    grid.validate()?;
    let table = evaluate_grid(pools, &grid.configs, k_max)?;
    let rows: Vec<usize> = (0..pools.len()).collect();
    calibrate_on(grid, &table, &rows)
}
