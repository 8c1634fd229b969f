use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{policy_next_distribution, PolicyContext};
use super::gumbel::{gumbel_max_select, sample_gumbel_vector, GumbelNoiseVector};
use super::tables::PolicyTables;
use super::vocab::TokenGroup;
use crate::error::{Error, Result};

/// Emitted token indices; `terminated` is set once EOS has been emitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    indices: Vec<usize>,
    terminated: bool,
}

impl TokenSequence {
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Self {
            indices,
            terminated: false,
        }
    }

    pub fn terminated(indices: Vec<usize>) -> Self {
        Self {
            indices,
            terminated: true,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn push(&mut self, token: usize) {
        self.indices.push(token);
    }

    pub fn prefix(&self, len: usize) -> TokenSequence {
        TokenSequence::from_indices(self.indices[..len.min(self.indices.len())].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRole {
    Action,
    Report,
}

/// Per-position Gumbel noise recorded while decoding, replayable under an
/// edited context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelTrace {
    pub role: TraceRole,
    vectors: Vec<GumbelNoiseVector>,
}

impl GumbelTrace {
    pub fn new(role: TraceRole, vectors: Vec<GumbelNoiseVector>) -> Self {
        Self { role, vectors }
    }

    pub fn vectors(&self) -> &[GumbelNoiseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// The first `len` positions.
    pub fn truncated(&self, len: usize) -> GumbelTrace {
        GumbelTrace {
            role: self.role,
            vectors: self.vectors[..len.min(self.vectors.len())].to_vec(),
        }
    }
}

fn role_of(ctx: &PolicyContext) -> TraceRole {
    match ctx {
        PolicyContext::Action { .. } => TraceRole::Action,
        PolicyContext::Report { .. } => TraceRole::Report,
    }
}

/// Autoregressive Gumbel-Max decoding.
///
/// Position `i` reuses vector `i` of `trace` when present; later positions
/// draw fresh noise from `rng` and append it, so the returned trace always
/// covers the emitted sequence.
pub fn decode_with_trace<R: Rng + ?Sized>(
    tables: &PolicyTables,
    ctx: &PolicyContext,
    trace: Option<&GumbelTrace>,
    rng: &mut R,
) -> Result<(TokenSequence, GumbelTrace)> {
    let vocab_len = tables.vocabulary.len();
    let role = role_of(ctx);
    let mut out = match trace {
        Some(t) => {
            if t.role != role {
                return Err(Error::invalid(format!(
                    "a {:?} trace cannot drive a {:?} decode",
                    t.role, role
                )));
            }
            if let Some(bad) = t.vectors.iter().position(|v| v.len() != vocab_len) {
                return Err(Error::invalid(format!(
                    "trace vector {bad} has length {}, vocabulary has {vocab_len}",
                    t.vectors[bad].len()
                )));
            }
            t.clone()
        }
        None => GumbelTrace::new(role, Vec::new()),
    };
    let eos = tables.vocabulary.group(TokenGroup::Eos).first().copied();
    let mut seq = TokenSequence::default();
    for pos in 0..tables.max_decode_len {
        let dist = policy_next_distribution(tables, ctx, pos, &seq)?;
        if pos == out.vectors.len() {
            out.vectors.push(sample_gumbel_vector(rng, vocab_len)?);
        }
        let token = gumbel_max_select(&dist, &out.vectors[pos])?;
        seq.push(token);
        if Some(token) == eos {
            seq.terminated = true;
            return Ok((seq, out));
        }
    }
    Err(Error::Truncated {
        partial: seq,
        max_len: tables.max_decode_len,
    })
}

/// Length-normalised log-likelihood of `seq` under `ctx`. Returns `-inf` as
/// soon as any token has zero probability (including tokens past the end of
/// the grammar).
pub fn sequence_loglik(tables: &PolicyTables, ctx: &PolicyContext, seq: &TokenSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("cannot score an empty sequence"));
    }
    if seq.len() > ctx.grammar().len() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    let mut prefix = TokenSequence::default();
    for &tok in seq.indices() {
        let dist = policy_next_distribution(tables, ctx, prefix.len(), &prefix)?;
        let lp = dist.log_prob(tok);
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += lp;
        prefix.push(tok);
    }
    Ok(total / seq.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{ActionConfig, KpiSummary, Scheduler};
    use crate::policy::PromptSlots;
    use crate::rng::seeded;

    fn action_ctx(slots: PromptSlots) -> PolicyContext {
        PolicyContext::Action { slots }
    }

    #[test]
    fn replay_is_deterministic_and_consistent() {
        let t = PolicyTables::default();
        let ctx = action_ctx(PromptSlots::full(Scheduler::Pf, 8, 5, 10));
        let (seq, trace) = decode_with_trace(&t, &ctx, None, &mut seeded(3)).unwrap();
        assert!(seq.is_terminated());
        assert_eq!(seq.len(), 5);
        assert_eq!(trace.len(), 5);
        let (again, trace2) = decode_with_trace(&t, &ctx, Some(&trace), &mut seeded(99)).unwrap();
        assert_eq!(again, seq);
        assert_eq!(trace2, trace);
    }

    #[test]
    fn short_trace_is_extended_with_fresh_noise() {
        let t = PolicyTables::default();
        let ctx = action_ctx(PromptSlots::default());
        let (_, full) = decode_with_trace(&t, &ctx, None, &mut seeded(5)).unwrap();
        let short = full.truncated(4);
        let (seq, out) = decode_with_trace(&t, &ctx, Some(&short), &mut seeded(6)).unwrap();
        assert_eq!(seq.len(), 5);
        assert_eq!(out.len(), 5);
        assert_eq!(&out.vectors()[..4], short.vectors());
    }

    #[test]
    fn truncation_carries_partial_sequence() {
        let mut t = PolicyTables::default();
        t.max_decode_len = 3;
        let ctx = action_ctx(PromptSlots::default());
        match decode_with_trace(&t, &ctx, None, &mut seeded(1)) {
            Err(Error::Truncated { partial, max_len }) => {
                assert_eq!(max_len, 3);
                assert_eq!(partial.len(), 3);
                assert!(!partial.is_terminated());
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn trace_validation() {
        let t = PolicyTables::default();
        let ctx = action_ctx(PromptSlots::default());
        let bad = GumbelTrace::new(
            TraceRole::Action,
            vec![GumbelNoiseVector::new(vec![0.0; 3]).unwrap()],
        );
        assert!(decode_with_trace(&t, &ctx, Some(&bad), &mut seeded(1)).is_err());
        let (_, trace) = decode_with_trace(&t, &ctx, None, &mut seeded(1)).unwrap();
        let wrong_role = GumbelTrace::new(TraceRole::Report, trace.vectors().to_vec());
        assert!(decode_with_trace(&t, &ctx, Some(&wrong_role), &mut seeded(1)).is_err());
    }

    #[test]
    fn loglik_examples() {
        let t = PolicyTables::default().with_eta(0.0);
        let ctx = action_ctx(PromptSlots::full(Scheduler::Rr, 4, 3, 7));
        let (seq, _) = decode_with_trace(&t, &ctx, None, &mut seeded(2)).unwrap();
        assert_eq!(sequence_loglik(&t, &ctx, &seq).unwrap(), 0.0);

        // A two-valued slot at 0.5/0.5 on every position of a length-1 prefix.
        let mut half = PolicyTables::default();
        half.default_priors.scheduler = vec![0.5, 0.5];
        let ctx = action_ctx(PromptSlots::default());
        let one = TokenSequence::from_indices(vec![half.vocabulary.index_of("sched:RR").unwrap()]);
        assert!((sequence_loglik(&half, &ctx, &one).unwrap() - 0.5f64.ln()).abs() < 1e-12);

        let zero = TokenSequence::from_indices(vec![t.vocabulary.index_of("sched:PF").unwrap()]);
        let rr_ctx = action_ctx(PromptSlots {
            scheduler: Some(Scheduler::Rr),
            ..Default::default()
        });
        assert_eq!(sequence_loglik(&t, &rr_ctx, &zero).unwrap(), f64::NEG_INFINITY);
        assert!(sequence_loglik(&t, &rr_ctx, &TokenSequence::default()).is_err());
    }

    #[test]
    fn loglik_of_report_with_soft_positions_is_negative() {
        let t = PolicyTables::default();
        let ctx = PolicyContext::Report {
            slots: PromptSlots::default(),
            action: ActionConfig::new(Scheduler::Rr, 4, 3.0, 7.0).unwrap(),
            summary: KpiSummary {
                mean_throughput_mbps: 3.0,
                mean_delay_ms: 2.5,
                frac_throughput_above: 0.0,
                frac_delay_above: 0.0,
                delay_trend_per_s: 0.0,
            },
        };
        let (seq, _) = decode_with_trace(&t, &ctx, None, &mut seeded(8)).unwrap();
        let ll = sequence_loglik(&t, &ctx, &seq).unwrap();
        assert!(ll < 0.0 && ll.is_finite());
    }
}
