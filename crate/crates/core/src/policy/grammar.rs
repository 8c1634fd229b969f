use serde::{Deserialize, Serialize};

use super::decode::TokenSequence;
use super::gumbel::TokenDistribution;
use super::tables::PolicyTables;
use super::vocab::{TokenGroup, Vocabulary};
use crate::envsim::{ActionConfig, KpiSummary, Scheduler};
use crate::error::{Error, Result};

/// Optional slot values carried by a prompt. `None` means the prompt does
/// not mention the slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSlots {
    pub scheduler: Option<Scheduler>,
    pub num_ues: Option<u32>,
    pub load_mbps: Option<u32>,
    pub duration_s: Option<u32>,
}

impl PromptSlots {
    pub fn full(scheduler: Scheduler, num_ues: u32, load_mbps: u32, duration_s: u32) -> Self {
        Self {
            scheduler: Some(scheduler),
            num_ues: Some(num_ues),
            load_mbps: Some(load_mbps),
            duration_s: Some(duration_s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: Option<u32>, lo: u32, hi: u32| match v {
            Some(x) if !(lo..=hi).contains(&x) => Err(Error::invalid(format!(
                "{name} = {x} is outside [{lo}, {hi}]"
            ))),
            _ => Ok(()),
        };
        check("num_ues", self.num_ues, 3, 10)?;
        check("load_mbps", self.load_mbps, 2, 10)?;
        check("duration_s", self.duration_s, 5, 10)
    }

    /// Number of slots whose value differs from `other`.
    pub fn differing_slots(&self, other: &PromptSlots) -> usize {
        usize::from(self.scheduler != other.scheduler)
            + usize::from(self.num_ues != other.num_ues)
            + usize::from(self.load_mbps != other.load_mbps)
            + usize::from(self.duration_s != other.duration_s)
    }
}

/// What the policy is conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyContext {
    Action {
        slots: PromptSlots,
    },
    Report {
        slots: PromptSlots,
        action: ActionConfig,
        summary: KpiSummary,
    },
}

/// Action sequence layout: `[SCHED, UES, LOAD, DUR, EOS]`.
pub const ACTION_GRAMMAR: [TokenGroup; 5] = [
    TokenGroup::Scheduler,
    TokenGroup::NumUes,
    TokenGroup::Load,
    TokenGroup::Duration,
    TokenGroup::Eos,
];

/// Digits used for the throughput bucket.
pub const THROUGHPUT_DIGITS: usize = 3;
/// Digits used for the delay bucket.
pub const DELAY_DIGITS: usize = 5;

/// Report sequence layout: template, three synonym choices, scheduler,
/// throughput bucket (3 digits), delay bucket (5 digits), two threshold
/// flags, trend, EOS.
pub const REPORT_GRAMMAR: [TokenGroup; 17] = [
    TokenGroup::Template,
    TokenGroup::Synonym(0),
    TokenGroup::Synonym(1),
    TokenGroup::Synonym(2),
    TokenGroup::Scheduler,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::Digit,
    TokenGroup::ThroughputFlag,
    TokenGroup::DelayFlag,
    TokenGroup::Trend,
    TokenGroup::Eos,
];

pub const fn report_grammar_len() -> usize {
    REPORT_GRAMMAR.len()
}

pub(crate) const THROUGHPUT_DIGIT_POSITIONS: std::ops::Range<usize> = 5..5 + THROUGHPUT_DIGITS;
pub(crate) const DELAY_DIGIT_POSITIONS: std::ops::Range<usize> =
    5 + THROUGHPUT_DIGITS..5 + THROUGHPUT_DIGITS + DELAY_DIGITS;

impl PolicyContext {
    pub fn grammar(&self) -> &'static [TokenGroup] {
        match self {
            PolicyContext::Action { .. } => &ACTION_GRAMMAR,
            PolicyContext::Report { .. } => &REPORT_GRAMMAR,
        }
    }
}

/// Bucket index of `value` at width `width`, clamped to what `digits`
/// decimal digits can show.
pub(crate) fn bucket_index(value: f64, width: f64, digits: usize) -> u64 {
    let max = 10u64.pow(digits as u32) - 1;
    if !value.is_finite() || value <= 0.0 {
        return 0;
    }
    let b = (value / width).round();
    if b >= max as f64 {
        max
    } else {
        b as u64
    }
}

fn digit_at(bucket: u64, digits: usize, offset: usize) -> usize {
    let power = 10u64.pow((digits - 1 - offset) as u32);
    ((bucket / power) % 10) as usize
}

fn spread(group: &[usize], local: &[f64], vocab_len: usize) -> TokenDistribution {
    let mut probs = vec![0.0; vocab_len];
    for (&idx, &p) in group.iter().zip(local) {
        probs[idx] = p;
    }
    TokenDistribution::new(probs).expect("group-local probabilities form a distribution")
}

fn smoothed(len: usize, target: usize, eta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let off = eta / (len - 1) as f64;
    (0..len).map(|i| if i == target { 1.0 - eta } else { off }).collect()
}

fn one_hot_local(len: usize, target: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[target] = 1.0;
    v
}

fn trend_probs(tables: &PolicyTables, slope: f64) -> Vec<f64> {
    let r = if slope.is_finite() { slope } else { 0.0 };
    let d = tables.trend_deadband_per_s;
    let t = tables.trend_temperature;
    let scores = [(r - d) / t, (d - r.abs()) / t, (-r - d) / t];
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

fn slot_index(values_from: u32, value: u32) -> usize {
    (value - values_from) as usize
}

/// Next-token distribution at `position` given the emitted `prefix`.
///
/// Action slots put `1 - eta` on a prompt-specified value and spread `eta`
/// over the rest of the slot; unspecified slots use the default prior.
/// Report positions use the fixed lexical tables, one-hot numeric buckets,
/// fraction-of-windows threshold flags and a soft trend token.
pub fn policy_next_distribution(
    tables: &PolicyTables,
    ctx: &PolicyContext,
    position: usize,
    prefix: &TokenSequence,
) -> Result<TokenDistribution> {
    let vocab = &tables.vocabulary;
    let grammar = ctx.grammar();
    if prefix.len() != position {
        return Err(Error::InvalidState(format!(
            "position {position} requested after a prefix of {} tokens",
            prefix.len()
        )));
    }
    if position >= grammar.len() {
        return Err(Error::InvalidState(format!(
            "position {position} is past the end of the grammar"
        )));
    }
    for (i, &tok) in prefix.indices().iter().enumerate() {
        if vocab.rank_in_group(grammar[i], tok).is_none() {
            return Err(Error::InvalidState(format!(
                "prefix token {:?} at position {i} is not a {:?} token",
                vocab.token(tok).unwrap_or("?"),
                grammar[i]
            )));
        }
    }
    let group = grammar[position];
    let members = vocab.group(group);
    let local = match ctx {
        PolicyContext::Action { slots } => action_local(tables, slots, group, members.len()),
        PolicyContext::Report {
            action, summary, ..
        } => report_local(tables, action, summary, position, group, members.len()),
    };
    Ok(spread(members, &local, vocab.len()))
}

fn action_local(tables: &PolicyTables, slots: &PromptSlots, group: TokenGroup, len: usize) -> Vec<f64> {
    let eta = tables.eta;
    let priors = &tables.default_priors;
    let pick = |specified: Option<usize>, prior: &Vec<f64>| match specified {
        Some(i) => smoothed(len, i, eta),
        None => prior.clone(),
    };
    match group {
        TokenGroup::Scheduler => pick(slots.scheduler.map(Scheduler::index), &priors.scheduler),
        TokenGroup::NumUes => pick(slots.num_ues.map(|n| slot_index(3, n)), &priors.num_ues),
        TokenGroup::Load => pick(slots.load_mbps.map(|n| slot_index(2, n)), &priors.load),
        TokenGroup::Duration => pick(slots.duration_s.map(|n| slot_index(5, n)), &priors.duration),
        _ => one_hot_local(len, 0),
    }
}

fn report_local(
    tables: &PolicyTables,
    action: &ActionConfig,
    summary: &KpiSummary,
    position: usize,
    group: TokenGroup,
    len: usize,
) -> Vec<f64> {
    match group {
        TokenGroup::Template => tables.template_probs.clone(),
        TokenGroup::Synonym(j) => tables.synonym_probs[j as usize].clone(),
        TokenGroup::Scheduler => one_hot_local(len, action.scheduler.index()),
        TokenGroup::Digit if THROUGHPUT_DIGIT_POSITIONS.contains(&position) => {
            let b = bucket_index(
                summary.mean_throughput_mbps,
                tables.throughput_bucket_mbps,
                THROUGHPUT_DIGITS,
            );
            one_hot_local(
                len,
                digit_at(b, THROUGHPUT_DIGITS, position - THROUGHPUT_DIGIT_POSITIONS.start),
            )
        }
        TokenGroup::Digit => {
            let b = bucket_index(summary.mean_delay_ms, tables.delay_bucket_ms, DELAY_DIGITS);
            one_hot_local(
                len,
                digit_at(b, DELAY_DIGITS, position - DELAY_DIGIT_POSITIONS.start),
            )
        }
        TokenGroup::ThroughputFlag => {
            let f = summary.frac_throughput_above.clamp(0.0, 1.0);
            vec![f, 1.0 - f]
        }
        TokenGroup::DelayFlag => {
            let f = summary.frac_delay_above.clamp(0.0, 1.0);
            vec![f, 1.0 - f]
        }
        TokenGroup::Trend => trend_probs(tables, summary.delay_trend_per_s),
        _ => one_hot_local(len, 0),
    }
}

/// Reads an action configuration back out of a decoded action sequence.
pub fn action_from_tokens(vocab: &Vocabulary, seq: &TokenSequence) -> Result<ActionConfig> {
    let idx = seq.indices();
    if idx.len() != ACTION_GRAMMAR.len() {
        return Err(Error::InvalidState(format!(
            "action sequence has {} tokens, expected {}",
            idx.len(),
            ACTION_GRAMMAR.len()
        )));
    }
    for (i, &g) in ACTION_GRAMMAR.iter().enumerate() {
        if vocab.rank_in_group(g, idx[i]).is_none() {
            return Err(Error::InvalidState(format!("token {i} is not a {g:?} token")));
        }
    }
    let scheduler = Scheduler::from_index(vocab.rank_in_group(TokenGroup::Scheduler, idx[0]).unwrap_or(0));
    let value = |i: usize| {
        vocab
            .value_of(idx[i])
            .ok_or_else(|| Error::InvalidState(format!("token {i} carries no value")))
    };
    ActionConfig::new(
        scheduler,
        value(1)?,
        f64::from(value(2)?),
        f64::from(value(3)?),
    )
}
