use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use ccg_core::conformal::{
    build_candidate_set, CandidateSet, CgGenerator, FwerMethod, LambdaConfig, ScoredCandidate, SetMember,
};
use ccg_core::envsim::{ActionConfig, KpiSeries};
use ccg_core::pipeline::{edit_prompt, render_prompt, run_cg, CgSampler, EditSpec, Episode, PromptSpec, Rollout};
use ccg_core::policy::{PromptSlots, TokenSequence};
use ccg_core::rng::derived;
use ccg_core::textmetrics::quality_score;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::AppState;

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Exactly one of `text` and `slots`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateEpisodeRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<PromptSlots>,
    /// Phrasing of a prompt rendered from `slots`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_seed: Option<u64>,
    /// Seed of the episode's noise; drawn by the server when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Public view of an episode: no noise of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeView {
    pub id: String,
    pub prompt: PromptSpec,
    pub action: ActionConfig,
    pub kpis: KpiSeries,
    pub report: TokenSequence,
    pub report_text: String,
}

impl EpisodeView {
    fn new(id: String, e: &Episode) -> Self {
        Self {
            id,
            prompt: e.prompt.clone(),
            action: e.action,
            kpis: e.kpis.clone(),
            report: e.report.clone(),
            report_text: e.report_text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Point,
    Set,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualRequest {
    #[serde(default)]
    pub edit: EditSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutView {
    pub action: ActionConfig,
    pub kpis: KpiSeries,
    pub report: TokenSequence,
    pub report_text: String,
}

impl From<Rollout> for RolloutView {
    fn from(r: Rollout) -> Self {
        Self {
            action: r.action,
            kpis: r.kpis,
            report: r.report,
            report_text: r.report_text,
        }
    }
}

/// A candidate set and the calibration it was built under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetView {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: LambdaConfig,
    pub k_max: usize,
    #[serde(flatten)]
    pub set: CandidateSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResponse {
    pub episode_id: String,
    pub mode: Mode,
    /// The edited prompt.
    pub prompt: PromptSpec,
    /// The edit changed nothing, so the factual outcome is returned.
    pub identity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<RolloutView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Uncalibrated,
    Calibrated,
    Abstained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStatus {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    /// Calibration records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwer: Option<FwerMethod>,
    /// Configurations certified by the FWER procedure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<PValueSummary>,
    pub twin: ccg_core::envsim::FidelityLevel,
    pub k_max: usize,
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub(crate) fn calibration_status(state: &AppState) -> CalibrationStatus {
    let mut s = CalibrationStatus {
        status: Status::Uncalibrated,
        epsilon: None,
        delta: None,
        grid_size: None,
        n: None,
        fwer: None,
        valid: None,
        lambda: None,
        p_values: None,
        twin: state.twin,
        k_max: state.k_max,
    };
    if let Some(c) = &state.calibration {
        let mut ps: Vec<f64> = c.records.iter().map(|r| r.p_value).collect();
        ps.sort_by(f64::total_cmp);
        s.status = if c.outcome.abstained {
            Status::Abstained
        } else {
            Status::Calibrated
        };
        s.epsilon = Some(c.grid.epsilon);
        s.delta = Some(c.grid.delta);
        s.grid_size = Some(c.grid.configs.len());
        s.n = Some(c.outcome.n);
        s.fwer = Some(c.grid.method.clone());
        s.valid = Some(c.outcome.valid.len());
        s.lambda = c.lambda();
        s.p_values = (!ps.is_empty()).then(|| PValueSummary {
            min: ps[0],
            median: ps[ps.len() / 2],
            max: ps[ps.len() - 1],
        });
    }
    s
}

pub async fn calibration(State(state): State<Arc<AppState>>) -> Json<CalibrationStatus> {
    Json(calibration_status(&state))
}

fn prompt_of(req: &CreateEpisodeRequest) -> ApiResult<PromptSpec> {
    match (&req.text, &req.slots) {
        (Some(text), None) => {
            if req.style_seed.is_some() {
                return Err(ApiError::bad_request("style_seed applies to slots, not to text"));
            }
            Ok(PromptSpec::from_text(text)?)
        }
        (None, Some(slots)) => Ok(render_prompt(slots, req.style_seed.unwrap_or(0))?),
        _ => Err(ApiError::bad_request("give exactly one of text and slots")),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

pub async fn create_episode(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateEpisodeRequest>,
) -> ApiResult<(StatusCode, Json<EpisodeView>)> {
    let prompt = prompt_of(&req)?;
    let view = blocking(move || {
        let (id, n) = state.reserve_id();
        let mut rng = match req.seed {
            Some(s) => derived(s, "episode", 0),
            None => derived(state.seed, "episode", n),
        };
        // The environment noise is dropped here and never stored.
        let (episode, _) = ccg_core::pipeline::run_factual_episode(&state.tables, &prompt, &id, &mut rng)?;
        let view = EpisodeView::new(id.clone(), &episode);
        state.insert(id, episode)?;
        Ok(view)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

pub async fn get_episode(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<EpisodeView>> {
    let e = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(EpisodeView::new(id, &e)))
}

/// The edited prompt, or `None` when the edit changes nothing.
fn apply_edit(x: &PromptSpec, edit: &EditSpec) -> ApiResult<Option<PromptSpec>> {
    let unchanged = edit.scheduler.is_none_or(|s| x.slots.scheduler == Some(s))
        && edit.num_ues.is_none_or(|v| x.slots.num_ues == Some(v))
        && edit.load_mbps.is_none_or(|v| x.slots.load_mbps == Some(v))
        && edit.duration_s.is_none_or(|v| x.slots.duration_s == Some(v))
        && edit.style_seed.is_none_or(|s| s == x.style_seed);
    if unchanged {
        return Ok(None);
    }
    Ok(Some(edit_prompt(x, edit)?))
}

fn factual_rollout(e: &Episode) -> Rollout {
    Rollout {
        action: e.action,
        action_tokens: e.action_tokens.clone(),
        kpis: e.kpis.clone(),
        report: e.report.clone(),
        report_text: e.report_text.clone(),
    }
}

pub async fn counterfactual(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<CounterfactualRequest>,
) -> ApiResult<Json<CounterfactualResponse>> {
    let episode = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let x_prime = apply_edit(&episode.prompt, &req.edit)?;
    let lambda = match req.mode {
        Mode::Point => None,
        Mode::Set => Some(certified_lambda(&state)?),
    };
    let resp = blocking(move || {
        let mut rng = match req.seed {
            Some(s) => derived(s, "counterfactual", 0),
            None => derived(state.seed, "counterfactual", state.next_query()),
        };
        let identity = x_prime.is_none();
        let prompt = x_prime.clone().unwrap_or_else(|| episode.prompt.clone());
        let mut resp = CounterfactualResponse {
            episode_id: id,
            mode: req.mode,
            prompt: prompt.clone(),
            identity,
            point: None,
            set: None,
        };
        match lambda {
            None => {
                let r = match &x_prime {
                    None => factual_rollout(&episode),
                    Some(x) => run_cg(&state.tables, &episode, x, state.abductor.as_ref(), state.twin, &mut rng)?,
                };
                resp.point = Some(r.into());
            }
            Some(lambda) => {
                let set = match &x_prime {
                    None => {
                        let quality = quality_score(
                            &state.tables,
                            &episode.prompt.slots,
                            &episode.action,
                            &episode.kpis,
                            &episode.report,
                        )?;
                        CandidateSet {
                            members: vec![SetMember {
                                k: 0,
                                candidate: ScoredCandidate {
                                    rollout: factual_rollout(&episode),
                                    quality,
                                },
                            }],
                            k_stop: 0,
                            trace: Vec::new(),
                            stopped_by: None,
                        }
                    }
                    Some(x) => {
                        let sampler =
                            CgSampler::new(&state.tables, &episode, x, state.abductor.as_ref(), state.twin, &mut rng)?;
                        let generator = CgGenerator::from_rng(&state.tables, sampler, &mut rng);
                        build_candidate_set(&generator, &lambda, state.k_max)?
                    }
                };
                let cal = state.calibration.as_ref().expect("checked before");
                resp.set = Some(SetView {
                    epsilon: cal.grid.epsilon,
                    delta: cal.grid.delta,
                    lambda,
                    k_max: state.k_max,
                    set,
                });
            }
        }
        Ok(resp)
    })
    .await?;
    Ok(Json(resp))
}

fn certified_lambda(state: &AppState) -> ApiResult<LambdaConfig> {
    let cal = state
        .calibration
        .as_ref()
        .ok_or_else(|| ApiError::conflict("set mode needs a calibration; none is loaded"))?;
    cal.lambda().ok_or_else(|| {
        let p = cal.min_p_value().unwrap_or(1.0);
        ApiError::conflict(format!(
            "calibration abstained: no configuration is certified at epsilon {} and delta {} (smallest p-value {p:.4})",
            cal.grid.epsilon, cal.grid.delta
        ))
    })
}
