use serde::{Deserialize, Serialize};

use super::prompt::PromptSpec;
use crate::abduction::{Abductor, NoisePosterior};
use crate::envsim::{run_environment, sample_exogenous_prior, ActionConfig, ExogenousNoise, FidelityLevel, KpiSeries};
use crate::error::Result;
use crate::policy::{action_from_tokens, decode_with_trace, GumbelTrace, PolicyContext, PolicyTables, PromptSlots, TokenSequence};
use crate::rng::SimRng;
use crate::textmetrics::{render_report_text, report_context};

/// A factual run: prompt, action, KPIs, report and the recorded agent noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub prompt: PromptSpec,
    pub action: ActionConfig,
    pub action_tokens: TokenSequence,
    pub kpis: KpiSeries,
    pub report: TokenSequence,
    pub report_text: String,
    pub action_trace: GumbelTrace,
    pub report_trace: GumbelTrace,
}

/// Output of any estimator: action, KPIs and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub action: ActionConfig,
    pub action_tokens: TokenSequence,
    pub kpis: KpiSeries,
    pub report: TokenSequence,
    pub report_text: String,
}

/// The environment noise of a factual run. Kept apart from [`Episode`] so
/// that counterfactual code paths never receive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenNoiseRecord {
    pub episode_id: String,
    noise: Option<ExogenousNoise>,
}

impl HiddenNoiseRecord {
    pub fn new(episode_id: impl Into<String>, noise: ExogenousNoise) -> Self {
        Self {
            episode_id: episode_id.into(),
            noise: Some(noise),
        }
    }

    /// A record that panics when read; used to prove a code path never
    /// touches the true noise.
    pub fn tripwire(episode_id: impl Into<String>) -> Self {
        Self {
            episode_id: episode_id.into(),
            noise: None,
        }
    }

    pub fn is_tripwire(&self) -> bool {
        self.noise.is_none()
    }

    pub fn reveal(&self) -> &ExogenousNoise {
        match &self.noise {
            Some(n) => n,
            None => panic!("hidden noise of episode {} was read", self.episode_id),
        }
    }
}

fn action_ctx(slots: &PromptSlots) -> PolicyContext {
    PolicyContext::Action { slots: *slots }
}

fn decode_action(
    tables: &PolicyTables,
    slots: &PromptSlots,
    trace: Option<&GumbelTrace>,
    rng: &mut SimRng,
) -> Result<(ActionConfig, TokenSequence, GumbelTrace)> {
    let (tokens, trace) = decode_with_trace(tables, &action_ctx(slots), trace, rng)?;
    Ok((action_from_tokens(&tables.vocabulary, &tokens)?, tokens, trace))
}

fn decode_report(
    tables: &PolicyTables,
    slots: &PromptSlots,
    action: &ActionConfig,
    kpis: &KpiSeries,
    trace: Option<&GumbelTrace>,
    rng: &mut SimRng,
) -> Result<(TokenSequence, String, GumbelTrace)> {
    let ctx = report_context(tables, slots, action, kpis);
    let (tokens, trace) = decode_with_trace(tables, &ctx, trace, rng)?;
    let text = render_report_text(&tables.vocabulary, &tokens)?;
    Ok((tokens, text, trace))
}

/// Runs a factual episode on the real environment with freshly sampled
/// agent and environment noise.
pub fn run_factual_episode(
    tables: &PolicyTables,
    prompt: &PromptSpec,
    episode_id: &str,
    rng: &mut SimRng,
) -> Result<(Episode, HiddenNoiseRecord)> {
    prompt.slots.validate()?;
    let (action, action_tokens, action_trace) = decode_action(tables, &prompt.slots, None, rng)?;
    let noise = sample_exogenous_prior(rng);
    let kpis = run_environment(&action, &noise, FidelityLevel::REAL)?;
    let (report, report_text, report_trace) = decode_report(tables, &prompt.slots, &action, &kpis, None, rng)?;
    let episode = Episode {
        prompt: prompt.clone(),
        action,
        action_tokens,
        kpis,
        report,
        report_text,
        action_trace,
        report_trace,
    };
    Ok((episode, HiddenNoiseRecord::new(episode_id, noise)))
}

/// Counterfactual generator for one (episode, edited prompt) pair. The
/// action replay and abduction setup happen once; each [`CgSampler::draw`]
/// uses a fresh noise sample.
pub struct CgSampler<'a> {
    tables: &'a PolicyTables,
    report_trace: &'a GumbelTrace,
    slots: PromptSlots,
    action: ActionConfig,
    action_tokens: TokenSequence,
    posterior: Box<dyn NoisePosterior + 'a>,
    twin: FidelityLevel,
}

impl<'a> CgSampler<'a> {
    pub fn new(
        tables: &'a PolicyTables,
        episode: &'a Episode,
        x_prime: &PromptSpec,
        abductor: &'a dyn Abductor,
        twin: FidelityLevel,
        rng: &mut SimRng,
    ) -> Result<Self> {
        x_prime.slots.validate()?;
        let (action, action_tokens, _) =
            decode_action(tables, &x_prime.slots, Some(&episode.action_trace), rng)?;
        let posterior = abductor.condition(&episode.action, &episode.kpis, rng)?;
        Ok(Self {
            tables,
            report_trace: &episode.report_trace,
            slots: x_prime.slots,
            action,
            action_tokens,
            posterior,
            twin,
        })
    }

    pub fn action(&self) -> &ActionConfig {
        &self.action
    }

    pub fn slots(&self) -> &PromptSlots {
        &self.slots
    }

    pub fn twin(&self) -> FidelityLevel {
        self.twin
    }

    pub fn draw(&self, rng: &mut SimRng) -> Result<Rollout> {
        let noise = self.posterior.sample(rng)?;
        let kpis = run_environment(&self.action, &noise, self.twin)?;
        let (report, report_text, _) =
            decode_report(self.tables, &self.slots, &self.action, &kpis, Some(self.report_trace), rng)?;
        Ok(Rollout {
            action: self.action,
            action_tokens: self.action_tokens.clone(),
            kpis,
            report,
            report_text,
        })
    }
}

/// One counterfactual estimate by abduction, action replay, twin simulation
/// and report replay.
pub fn run_cg(
    tables: &PolicyTables,
    episode: &Episode,
    x_prime: &PromptSpec,
    abductor: &dyn Abductor,
    twin: FidelityLevel,
    rng: &mut SimRng,
) -> Result<Rollout> {
    CgSampler::new(tables, episode, x_prime, abductor, twin, rng)?.draw(rng)
}

fn fresh_rollout(tables: &PolicyTables, x_prime: &PromptSpec, fidelity: FidelityLevel, rng: &mut SimRng) -> Result<Rollout> {
    x_prime.slots.validate()?;
    let (action, action_tokens, _) = decode_action(tables, &x_prime.slots, None, rng)?;
    let noise = sample_exogenous_prior(rng);
    let kpis = run_environment(&action, &noise, fidelity)?;
    let (report, report_text, _) = decode_report(tables, &x_prime.slots, &action, &kpis, None, rng)?;
    Ok(Rollout {
        action,
        action_tokens,
        kpis,
        report,
        report_text,
    })
}

/// Interventional generation: a fresh run of the real environment.
pub fn run_ig(tables: &PolicyTables, x_prime: &PromptSpec, rng: &mut SimRng) -> Result<Rollout> {
    fresh_rollout(tables, x_prime, FidelityLevel::REAL, rng)
}

/// Simulated interventional generation: a fresh run of the twin.
pub fn run_sig(tables: &PolicyTables, x_prime: &PromptSpec, twin: FidelityLevel, rng: &mut SimRng) -> Result<Rollout> {
    fresh_rollout(tables, x_prime, twin, rng)
}

/// Ground truth: replays both traces under `x_prime` against the real
/// environment with the true noise.
pub fn true_counterfactual(
    tables: &PolicyTables,
    episode: &Episode,
    hidden: &HiddenNoiseRecord,
    x_prime: &PromptSpec,
    rng: &mut SimRng,
) -> Result<Rollout> {
    x_prime.slots.validate()?;
    let (action, action_tokens, _) = decode_action(tables, &x_prime.slots, Some(&episode.action_trace), rng)?;
    let kpis = run_environment(&action, hidden.reveal(), FidelityLevel::REAL)?;
    let (report, report_text, _) =
        decode_report(tables, &x_prime.slots, &action, &kpis, Some(&episode.report_trace), rng)?;
    Ok(Rollout {
        action,
        action_tokens,
        kpis,
        report,
        report_text,
    })
}
