//! Conformal counterfactual generation: candidate sets built under an
//! acceptance / stopping rule, Learn-Then-Test calibration of that rule and
//! the fixed-size k-CG baseline.
//!
//! Candidate `k` of a query is a pure function of `k` (its randomness comes
//! from a per-query base seed), so every rule configuration sees the same
//! draws. Calibration exploits this by scoring a cached [`CandidatePool`]
//! per record instead of regenerating for each configuration.

mod ltt;
mod pool;

use serde::{Deserialize, Serialize};

use crate::envsim::FidelityLevel;
use crate::error::{Error, Result};
use crate::pipeline::{CgSampler, Rollout};
use crate::policy::{PolicyTables, TokenSequence};
use crate::rng::{derived, SimRng};
use crate::serde_ext::ext_f64;
use crate::textmetrics::{confidence, quality_score, rouge_l, AdmissionRule};

pub use ltt::{
    binomial_pvalue, calibrate, calibrate_on, empirical_risk, fwer_valid_set, select_configuration, CalibrationOutcome,
    CalibrationRecord, FwerMethod, LambdaGrid, SELECTION_GAMMA,
};
pub use pool::{evaluate_grid, CandidatePool, GridTable, PoolOutcome};

/// Generation cap per query.
pub const K_MAX: usize = 20;

/// Thresholds of the acceptance and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    /// Minimum quality for acceptance.
    #[serde(with = "ext_f64")]
    pub quality_min: f64,
    /// Maximum similarity to the current set for acceptance.
    #[serde(with = "ext_f64")]
    pub similarity_max: f64,
    /// Stop once the set confidence reaches this value.
    #[serde(with = "ext_f64")]
    pub confidence_stop: f64,
}

impl LambdaConfig {
    pub fn new(quality_min: f64, similarity_max: f64, confidence_stop: f64) -> Result<Self> {
        let c = Self {
            quality_min,
            similarity_max,
            confidence_stop,
        };
        c.validate()?;
        Ok(c)
    }

    /// Accept everything and never stop early.
    pub fn accept_all() -> Self {
        Self {
            quality_min: f64::NEG_INFINITY,
            similarity_max: 1.0,
            confidence_stop: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quality_min.is_nan() || self.confidence_stop.is_nan() {
            return Err(Error::invalid("lambda thresholds must not be NaN"));
        }
        if !(0.0..=1.0).contains(&self.similarity_max) {
            return Err(Error::invalid(format!(
                "similarity threshold {} outside [0, 1]",
                self.similarity_max
            )));
        }
        Ok(())
    }

    fn accepts(&self, quality: f64, similarity: f64) -> bool {
        quality >= self.quality_min && similarity <= self.similarity_max
    }
}

/// A generated candidate and its quality score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub rollout: Rollout,
    #[serde(with = "ext_f64")]
    pub quality: f64,
}

/// Source of candidates for one query.
pub trait CandidateGenerator {
    /// The `k`-th candidate (1-based). Must depend on `k` only.
    fn generate(&self, k: usize) -> Result<ScoredCandidate>;
}

/// CG candidates: posterior noise draws pushed through the twin, with the
/// factual report noise replayed. Candidate `k` uses its own sub-stream of
/// `base_seed`.
pub struct CgGenerator<'a> {
    tables: &'a PolicyTables,
    sampler: CgSampler<'a>,
    base_seed: u64,
}

impl<'a> CgGenerator<'a> {
    pub fn new(tables: &'a PolicyTables, sampler: CgSampler<'a>, base_seed: u64) -> Self {
        Self {
            tables,
            sampler,
            base_seed,
        }
    }

    /// Draws the base seed from `rng`.
    pub fn from_rng(tables: &'a PolicyTables, sampler: CgSampler<'a>, rng: &mut SimRng) -> Self {
        Self::new(tables, sampler, rand::Rng::random(rng))
    }

    pub fn sampler(&self) -> &CgSampler<'a> {
        &self.sampler
    }

    pub fn twin(&self) -> FidelityLevel {
        self.sampler.twin()
    }
}

impl CandidateGenerator for CgGenerator<'_> {
    fn generate(&self, k: usize) -> Result<ScoredCandidate> {
        let mut rng = derived(self.base_seed, "candidate", k as u64);
        let rollout = self.sampler.draw(&mut rng)?;
        let quality = quality_score(
            self.tables,
            self.sampler.slots(),
            &rollout.action,
            &rollout.kpis,
            &rollout.report,
        )?;
        Ok(ScoredCandidate { rollout, quality })
    }
}

/// Why generation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    KMax,
}

/// One accept / reject step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub k: usize,
    #[serde(with = "ext_f64")]
    pub quality: f64,
    /// Similarity to the set before this step.
    #[serde(with = "ext_f64")]
    pub similarity: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMember {
    /// Generation index of this member.
    pub k: usize,
    pub candidate: ScoredCandidate,
}

/// Output of the acceptance / stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub members: Vec<SetMember>,
    /// Generations drawn.
    pub k_stop: usize,
    pub trace: Vec<Decision>,
    /// `None` only in the partial set carried by a generation error.
    pub stopped_by: Option<StopReason>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn reports(&self) -> Vec<&TokenSequence> {
        self.members.iter().map(|m| &m.candidate.rollout.report).collect()
    }

    pub fn qualities(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.candidate.quality).collect()
    }

    /// Generation index of the first admissible member.
    pub fn first_admissible(&self, admits: impl Fn(&TokenSequence) -> Result<bool>) -> Result<Option<usize>> {
        for m in &self.members {
            if admits(&m.candidate.rollout.report)? {
                return Ok(Some(m.k));
            }
        }
        Ok(None)
    }
}

/// The shared rule. `draw(k)` yields the report and quality of generation
/// `k`; `similarity(set, k)` scores generation `k` against accepted
/// generations. Returns accepted indices, trace, `k_stop` and stop reason.
pub(crate) fn run_rule<D, S>(
    lambda: &LambdaConfig,
    k_max: usize,
    mut draw: D,
    mut similarity: S,
) -> std::result::Result<(Vec<usize>, Vec<Decision>, usize, StopReason), (Vec<usize>, Vec<Decision>, usize, Error)>
where
    D: FnMut(usize) -> Result<f64>,
    S: FnMut(&[usize], usize) -> Result<f64>,
{
    let mut accepted: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut qualities: Vec<f64> = Vec::new();
    for k in 1..=k_max {
        let quality = match draw(k) {
            Ok(q) => q,
            Err(e) => return Err((accepted, trace, k - 1, e)),
        };
        let sim = if accepted.is_empty() {
            f64::NEG_INFINITY
        } else {
            match similarity(&accepted, k) {
                Ok(s) => s,
                Err(e) => return Err((accepted, trace, k, e)),
            }
        };
        let ok = lambda.accepts(quality, sim);
        trace.push(Decision {
            k,
            quality,
            similarity: sim,
            accepted: ok,
        });
        if ok {
            accepted.push(k);
            qualities.push(quality);
        }
        if confidence(&qualities) >= lambda.confidence_stop {
            return Ok((accepted, trace, k, StopReason::Threshold));
        }
    }
    Ok((accepted, trace, k_max, StopReason::KMax))
}

/// Draws candidates until the stopping rule fires or `k_max` is reached.
/// A generator failure aborts with the partial set attached to the error.
pub fn build_candidate_set(
    generator: &dyn CandidateGenerator,
    lambda: &LambdaConfig,
    k_max: usize,
) -> Result<CandidateSet> {
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    lambda.validate()?;
    let mut drawn: Vec<ScoredCandidate> = Vec::new();
    let outcome = {
        let drawn_cell = std::cell::RefCell::new(&mut drawn);
        run_rule(
            lambda,
            k_max,
            |_k| {
                let c = generator.generate(drawn_cell.borrow().len() + 1)?;
                let q = c.quality;
                drawn_cell.borrow_mut().push(c);
                Ok(q)
            },
            |acc, k| {
                let d = drawn_cell.borrow();
                let cand = &d[k - 1].rollout.report;
                acc.iter()
                    .map(|&j| rouge_l(cand, &d[j - 1].rollout.report))
                    .try_fold(f64::NEG_INFINITY, |best, s| s.map(|s| best.max(s)))
            },
        )
    };
    let collect = |accepted: &[usize], drawn: &[ScoredCandidate]| {
        accepted
            .iter()
            .map(|&k| SetMember {
                k,
                candidate: drawn[k - 1].clone(),
            })
            .collect::<Vec<_>>()
    };
    match outcome {
        Ok((accepted, trace, k_stop, reason)) => Ok(CandidateSet {
            members: collect(&accepted, &drawn),
            k_stop,
            trace,
            stopped_by: Some(reason),
        }),
        Err((accepted, trace, k_stop, e)) => Err(Error::GenerationAborted {
            partial: Box::new(CandidateSet {
                members: collect(&accepted, &drawn),
                k_stop,
                trace,
                stopped_by: None,
            }),
            reason: e.to_string(),
        }),
    }
}

/// 1 when no member is admissible for `reference`, else 0.
pub fn set_loss(
    rule: &AdmissionRule,
    vocab: &crate::policy::Vocabulary,
    set: &CandidateSet,
    reference: &TokenSequence,
) -> Result<u8> {
    for r in set.reports() {
        if rule.admits(vocab, r, reference)? {
            return Ok(0);
        }
    }
    Ok(1)
}

/// Exactly `k` generations, all accepted.
pub fn k_cg_baseline(generator: &dyn CandidateGenerator, k: usize) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::invalid("k-CG needs k >= 1"));
    }
    build_candidate_set(generator, &LambdaConfig::accept_all(), k)
}
