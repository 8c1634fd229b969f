//! HTTP API over factual episodes, counterfactual queries and the active
//! calibration.
//!
//! Endpoints:
//!
//! - `POST /episodes`: run a factual episode from prompt text or slots.
//! - `GET /episodes/{id}`: a stored episode.
//! - `POST /episodes/{id}/counterfactual`: a CG point estimate or a CCG set
//!   under the calibrated rule.
//! - `GET /calibration`: calibration status.
//! - `GET /health`: liveness.
//!
//! Request and response bodies are described in `schema/api.json`. The
//! environment noise of a factual run is dropped as soon as the run ends, so
//! it can appear neither in a response nor in the persistence log.

mod api;
mod error;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;

pub use api::{
    CalibrationStatus, CounterfactualRequest, CounterfactualResponse, CreateEpisodeRequest, EpisodeView, Mode,
    PValueSummary, RolloutView, SetView, Status,
};
pub use error::ApiError;
pub use state::{AppState, ServiceConfig, StoredEpisode};

/// The API router over shared state.
pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/calibration", get(api::calibration))
        .route("/episodes", post(api::create_episode))
        .route("/episodes/{id}", get(api::get_episode))
        .route("/episodes/{id}/counterfactual", post(api::counterfactual))
        .with_state(state)
}

/// Serves the API on `addr` until ctrl-c.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> ccg_core::Result<()> {
    let state = Arc::new(AppState::open(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, episodes = state.len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
