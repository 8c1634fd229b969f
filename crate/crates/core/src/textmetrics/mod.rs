//! Scores over report token sequences: ROUGE-L, set similarity, quality,
//! admission and confidence, plus fact extraction and text rendering.

mod render;

use serde::{Deserialize, Serialize};

use crate::envsim::{ActionConfig, KpiSeries, Scheduler};
use crate::error::{Error, Result};
use crate::policy::{
    sequence_loglik, PolicyContext, PolicyTables, PromptSlots, TokenSequence, Vocabulary, DELAY_DIGITS,
    REPORT_GRAMMAR, THROUGHPUT_DIGITS,
};

pub use render::render_report_text;

fn lcs_len(a: &[usize], b: &[usize]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure on token sequences.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::invalid("ROUGE-L needs two non-empty sequences"));
    }
    let lcs = lcs_len(candidate.indices(), reference.indices()) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Highest ROUGE-L between `candidate` and any member; `-inf` for an empty set.
pub fn similarity_to_set(set: &[TokenSequence], candidate: &TokenSequence) -> Result<f64> {
    set.iter()
        .map(|m| rouge_l(candidate, m))
        .try_fold(f64::NEG_INFINITY, |best, s| s.map(|s| best.max(s)))
}

/// Best member quality; `-inf` for an empty set.
pub fn confidence(qualities: &[f64]) -> f64 {
    qualities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Up,
    Stable,
    Down,
}

impl Trend {
    /// Trend for a rank in the trend token group (up, stable, down).
    pub fn from_rank(r: usize) -> Self {
        match r {
            0 => Trend::Up,
            1 => Trend::Stable,
            _ => Trend::Down,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Trend::Up => 0,
            Trend::Stable => 1,
            Trend::Down => 2,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Trend::Up => "rising",
            Trend::Stable => "stable",
            Trend::Down => "falling",
        }
    }
}

/// The facts a report asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReportFacts {
    pub scheduler: Scheduler,
    /// Mean throughput in 0.1 Mbps buckets.
    pub throughput_bucket: u32,
    /// Mean delay in 0.1 ms buckets.
    pub delay_bucket: u32,
    pub throughput_high: bool,
    pub delay_high: bool,
    pub trend: Trend,
}

/// Reads the facts back out of an in-grammar report.
pub fn extract_facts(vocab: &Vocabulary, report: &TokenSequence) -> Result<ReportFacts> {
    let idx = report.indices();
    let describe = || {
        idx.iter()
            .map(|&i| vocab.token(i).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    if idx.len() != REPORT_GRAMMAR.len() {
        return Err(Error::parse(
            describe(),
            format!("report has {} tokens, expected {}", idx.len(), REPORT_GRAMMAR.len()),
        ));
    }
    let mut ranks = [0usize; REPORT_GRAMMAR.len()];
    for (pos, (&tok, &group)) in idx.iter().zip(REPORT_GRAMMAR.iter()).enumerate() {
        ranks[pos] = vocab
            .rank_in_group(group, tok)
            .ok_or_else(|| Error::parse(describe(), format!("position {pos} is not a {group:?} token")))?;
    }
    let number = |start: usize, len: usize| ranks[start..start + len].iter().fold(0u32, |acc, &d| acc * 10 + d as u32);
    let thr_start = 5;
    let dly_start = thr_start + THROUGHPUT_DIGITS;
    let flags = dly_start + DELAY_DIGITS;
    Ok(ReportFacts {
        scheduler: Scheduler::from_index(ranks[4]),
        throughput_bucket: number(thr_start, THROUGHPUT_DIGITS),
        delay_bucket: number(dly_start, DELAY_DIGITS),
        throughput_high: ranks[flags] == 0,
        delay_high: ranks[flags + 1] == 0,
        trend: Trend::from_rank(ranks[flags + 2]),
    })
}

/// Builds the in-grammar report asserting `facts`, with lexical choices
/// `style` (template, then the three synonym slots). Inverse of
/// [`extract_facts`].
pub fn facts_to_report(vocab: &Vocabulary, facts: &ReportFacts, style: [usize; 4]) -> Result<TokenSequence> {
    let digits = |mut v: u32, n: usize| -> Result<Vec<usize>> {
        let mut out = vec![0; n];
        for slot in out.iter_mut().rev() {
            *slot = (v % 10) as usize;
            v /= 10;
        }
        if v != 0 {
            return Err(Error::invalid(format!("value does not fit in {n} digits")));
        }
        Ok(out)
    };
    let mut ranks = vec![style[0], style[1], style[2], style[3], facts.scheduler.index()];
    ranks.extend(digits(facts.throughput_bucket, THROUGHPUT_DIGITS)?);
    ranks.extend(digits(facts.delay_bucket, DELAY_DIGITS)?);
    ranks.push(usize::from(!facts.throughput_high));
    ranks.push(usize::from(!facts.delay_high));
    ranks.push(facts.trend.rank());
    ranks.push(0);
    let idx = REPORT_GRAMMAR
        .iter()
        .zip(&ranks)
        .map(|(&g, &r)| {
            vocab
                .group(g)
                .get(r)
                .copied()
                .ok_or_else(|| Error::invalid(format!("rank {r} outside {g:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TokenSequence::terminated(idx))
}

/// Tolerances of the deterministic admission judge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRule {
    /// Buckets by which a numeric fact may differ.
    pub bucket_tolerance: u32,
    /// Extra tolerance as a fraction of the reference value; 0 disables it.
    pub relative_tolerance: f64,
    /// Whether the threshold flags must match too.
    pub match_flags: bool,
}

impl Default for AdmissionRule {
    fn default() -> Self {
        Self {
            bucket_tolerance: 1,
            relative_tolerance: 0.3,
            match_flags: false,
        }
    }
}

impl AdmissionRule {
    /// The plain rule: scheduler and trend equal, buckets within one.
    pub fn strict() -> Self {
        Self {
            bucket_tolerance: 1,
            relative_tolerance: 0.0,
            match_flags: false,
        }
    }

    fn close(&self, a: u32, b: u32) -> bool {
        let tol = f64::from(self.bucket_tolerance).max(self.relative_tolerance * f64::from(b));
        f64::from(a.abs_diff(b)) <= tol
    }

    pub fn admits_facts(&self, candidate: &ReportFacts, reference: &ReportFacts) -> bool {
        candidate.scheduler == reference.scheduler
            && candidate.trend == reference.trend
            && self.close(candidate.throughput_bucket, reference.throughput_bucket)
            && self.close(candidate.delay_bucket, reference.delay_bucket)
            && (!self.match_flags
                || (candidate.throughput_high == reference.throughput_high
                    && candidate.delay_high == reference.delay_high))
    }

    pub fn admits(&self, vocab: &Vocabulary, candidate: &TokenSequence, reference: &TokenSequence) -> Result<bool> {
        Ok(self.admits_facts(&extract_facts(vocab, candidate)?, &extract_facts(vocab, reference)?))
    }
}

/// Admission under the default rule.
pub fn admission(vocab: &Vocabulary, candidate: &TokenSequence, reference: &TokenSequence) -> Result<bool> {
    AdmissionRule::default().admits(vocab, candidate, reference)
}

/// The report-generator context for prompt slots, an action and its KPIs.
pub fn report_context(tables: &PolicyTables, slots: &PromptSlots, action: &ActionConfig, kpis: &KpiSeries) -> PolicyContext {
    PolicyContext::Report {
        slots: *slots,
        action: *action,
        summary: kpis.summary(tables.throughput_threshold_mbps, tables.delay_threshold_ms),
    }
}

/// Normalised log-likelihood of `candidate` under the report context of the
/// counterfactual prompt, action and KPIs. Always `<= 0`; `-inf` when the
/// candidate is impossible under that context.
pub fn quality_score(
    tables: &PolicyTables,
    slots: &PromptSlots,
    action: &ActionConfig,
    kpis: &KpiSeries,
    candidate: &TokenSequence,
) -> Result<f64> {
    sequence_loglik(tables, &report_context(tables, slots, action, kpis), candidate)
}
