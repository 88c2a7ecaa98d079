use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use super::{EvalService, EvalServiceError, RatingInput, SessionRequest};
use crate::workspace::WorkspaceConfig;

#[derive(Clone)]
pub struct ApiState {
    pub service: Arc<EvalService>,
    /// Needed to resolve corpora, predictions and checkpoints by name.
    pub workspace: Option<Arc<WorkspaceConfig>>,
}

impl ApiState {
    pub fn new(service: EvalService, workspace: Option<WorkspaceConfig>) -> Self {
        ApiState { service: Arc::new(service), workspace: workspace.map(Arc::new) }
    }
}

struct ApiError(EvalServiceError);

impl From<EvalServiceError> for ApiError {
    fn from(e: EvalServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(EvalServiceError::BadRequest(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use EvalServiceError::*;
        let status = match &self.0 {
            UnknownSession(_) | UnknownItem { .. } => StatusCode::NOT_FOUND,
            Summarize(crate::summarize::SummarizeError::CheckpointNotFound(_)) => StatusCode::NOT_FOUND,
            ScoreOutOfRange { .. } | BadRequest(_) | InsufficientItems { .. } => StatusCode::BAD_REQUEST,
            Workspace(_) | Corpus(_) | Predictions(_) => StatusCode::BAD_REQUEST,
            NoRatings(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = json!({ "error": self.0.class(), "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

/// Rater-facing reply to session creation: no items, no blinding.
#[derive(Serialize)]
struct Created {
    session_id: String,
    total: usize,
}

async fn create(
    State(state): State<ApiState>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body?;
    // Creation may run the summarizer.
    let session = tokio::task::spawn_blocking(move || state.service.create_from_request(&req, state.workspace.as_deref()))
        .await
        .map_err(|e| EvalServiceError::Io(std::io::Error::other(e)))??;
    Ok((StatusCode::CREATED, Json(Created { total: session.items.len(), session_id: session.session_id })))
}

async fn next(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.service.next_item(&id)?).into_response())
}

async fn rate(
    State(state): State<ApiState>,
    Path(id): Path<String>,
    body: Result<Json<RatingInput>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(input) = body?;
    Ok(Json(state.service.submit_rating(&id, &input)?).into_response())
}

async fn summary(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = state.service.aggregate_session(&id)?;
    let mut v = serde_json::to_value(&s).expect("summary serializes");
    v["row"] = json!(s.table_row());
    Ok(Json(v).into_response())
}

async fn export(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let csv = state.service.export_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/ratings", post(rate))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/export.csv", get(export))
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, state: ApiState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("eval API listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
