//! Prompts, episodes and the counterfactual estimators.
//!
//! - CG: abduction of the environment noise plus replay of the recorded
//!   Gumbel traces under the edited prompt, with the twin simulator.
//! - IG: a fresh run of the real environment under the edited prompt.
//! - SIG: a fresh run of the twin under the edited prompt.
//! - [`true_counterfactual`]: replay against the real environment with the
//!   hidden true noise; evaluation only.

mod dataset;
mod episode;
mod prompt;

pub use dataset::{
    generate_dataset, read_dataset, read_hidden_noise, write_dataset, write_hidden_noise, Dataset,
    DatasetConfig, DatasetRecord, EditKind,
};
pub use episode::{
    run_cg, run_factual_episode, run_ig, run_sig, true_counterfactual, CgSampler, Episode,
    HiddenNoiseRecord, Rollout,
};
pub use prompt::{edit_prompt, is_admissible_edit, parse_prompt, render_prompt, EditSpec, PromptSpec};
