use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_rule, CandidateGenerator, LambdaConfig, StopReason};
use crate::error::{Error, Result};
use crate::policy::TokenSequence;
use crate::textmetrics::rouge_l;

/// The first `k_max` candidates of one query, scored once: reports,
/// qualities, admissibility against the reference and pairwise ROUGE-L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub reports: Vec<TokenSequence>,
    pub qualities: Vec<f64>,
    pub admissible: Vec<bool>,
    similarity: Vec<Vec<f64>>,
}

/// Result of running a rule on a pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOutcome {
    /// Accepted generation indices (1-based).
    pub accepted: Vec<usize>,
    pub k_stop: usize,
    pub stopped_by: StopReason,
    /// First accepted admissible generation.
    pub k_star: Option<usize>,
}

impl PoolOutcome {
    pub fn loss(&self) -> u8 {
        u8::from(self.k_star.is_none())
    }

    pub fn size(&self) -> usize {
        self.accepted.len()
    }
}

impl CandidatePool {
    pub fn new(reports: Vec<TokenSequence>, qualities: Vec<f64>, admissible: Vec<bool>) -> Result<Self> {
        if reports.is_empty() || reports.len() != qualities.len() || reports.len() != admissible.len() {
            return Err(Error::invalid(format!(
                "pool needs equal non-empty lengths, got {}/{}/{}",
                reports.len(),
                qualities.len(),
                admissible.len()
            )));
        }
        let n = reports.len();
        let mut similarity = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                let s = rouge_l(&reports[i], &reports[j])?;
                similarity[i][j] = s;
                similarity[j][i] = s;
            }
        }
        Ok(Self {
            reports,
            qualities,
            admissible,
            similarity,
        })
    }

    /// Draws generations `1..=k_max` and marks each with `admits`.
    pub fn from_generator(
        generator: &dyn CandidateGenerator,
        k_max: usize,
        admits: impl Fn(&TokenSequence) -> Result<bool>,
    ) -> Result<Self> {
        let mut reports = Vec::with_capacity(k_max);
        let mut qualities = Vec::with_capacity(k_max);
        let mut admissible = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let c = generator.generate(k)?;
            admissible.push(admits(&c.rollout.report)?);
            qualities.push(c.quality);
            reports.push(c.rollout.report);
        }
        Self::new(reports, qualities, admissible)
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    /// Runs the rule on the cached draws. `k_max` may not exceed the pool.
    pub fn run(&self, lambda: &LambdaConfig, k_max: usize) -> Result<PoolOutcome> {
        if k_max == 0 || k_max > self.len() {
            return Err(Error::invalid(format!("k_max {k_max} outside 1..={}", self.len())));
        }
        let out = run_rule(
            lambda,
            k_max,
            |k| Ok(self.qualities[k - 1]),
            |acc, k| {
                Ok(acc
                    .iter()
                    .map(|&j| self.similarity[k - 1][j - 1])
                    .fold(f64::NEG_INFINITY, f64::max))
            },
        );
        let (accepted, _, k_stop, stopped_by) = out.map_err(|(_, _, _, e)| e)?;
        let k_star = accepted.iter().copied().find(|&k| self.admissible[k - 1]);
        Ok(PoolOutcome {
            accepted,
            k_stop,
            stopped_by,
            k_star,
        })
    }
}

/// Per-record, per-configuration outcome summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub grid: Vec<LambdaConfig>,
    /// `cells[c][r]`: configuration `c` on record `r`.
    pub cells: Vec<Vec<PoolOutcome>>,
}

impl GridTable {
    pub fn num_records(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }
}

/// Runs every configuration on every pool, in parallel over configurations.
pub fn evaluate_grid(pools: &[CandidatePool], grid: &[LambdaConfig], k_max: usize) -> Result<GridTable> {
    let cells = grid
        .par_iter()
        .map(|l| pools.iter().map(|p| p.run(l, k_max)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(GridTable {
        grid: grid.to_vec(),
        cells,
    })
}
