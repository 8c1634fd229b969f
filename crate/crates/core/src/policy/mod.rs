//! Surrogate autoregressive token policy.
//!
//! One policy plays both roles of the agent: the action generator, which
//! turns prompt slots into a scheduler configuration, and the report
//! generator, which turns (prompt, action, KPI summary) into a short
//! templated report. Every token is drawn with the Gumbel-Max mechanism and
//! the per-position noise is recorded so a decode can be replayed under an
//! edited context.

mod decode;
mod grammar;
mod gumbel;
mod tables;
mod vocab;

pub use decode::{decode_with_trace, sequence_loglik, GumbelTrace, TokenSequence, TraceRole};
pub use grammar::{
    action_from_tokens, policy_next_distribution, report_grammar_len, PolicyContext,
    PromptSlots, ACTION_GRAMMAR, DELAY_DIGITS, REPORT_GRAMMAR, THROUGHPUT_DIGITS,
};
pub use gumbel::{
    gumbel_max_select, sample_gumbel_vector, GumbelNoiseVector, TokenDistribution,
};
pub use tables::{DefaultPriors, PolicyTables, POLICY_TABLES_VERSION};
pub use vocab::{TokenGroup, Vocabulary};
