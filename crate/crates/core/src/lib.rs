//! Counterfactual generation (CG) and conformal counterfactual generation
//! (CCG) for an agent that turns operator intents into radio-scheduler
//! configurations.
//!
//! The crate is organised bottom-up:
//!
//! - [`policy`]: a surrogate token-level agent with Gumbel-Max sampling,
//!   noise recording and replay.
//! - [`envsim`]: a single-cell scheduler simulator at four fidelity levels.
//! - [`abduction`]: inference of the environment's exogenous noise from a
//!   factual (action, KPI) pair.
//! - [`pipeline`]: prompts, episodes and the CG / IG / SIG estimators.
//! - [`textmetrics`]: ROUGE-L, admission, quality and confidence scores.
//! - [`conformal`]: candidate sets, binomial p-values, FWER control and
//!   configuration selection.
//! - [`harness`]: evaluation metrics and the experiment runner.

pub mod abduction;
pub mod conformal;
pub mod envsim;
pub mod error;
pub mod harness;
pub mod pipeline;
pub mod policy;
pub mod rng;
mod serde_ext;
pub mod textmetrics;

pub use error::{Error, Result};
