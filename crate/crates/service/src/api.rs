//! HTTP binding. Every error body is `{"error": {"code", "message"}}`.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cabaret_core::graphcore::ItemId;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{CreatedSession, Experiment, ServiceError, ShownList, StepAck, StepSubmission};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionsBody {
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionBody {
    pub region: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CurrentQuery {
    pub current: String,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self {
            status: StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", message }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(experiment: Arc<Experiment>) -> Router {
    Router::new()
        .route("/regions", get(regions))
        .route("/sessions", post(create_session))
        .route("/sessions/{token}/recommendations", get(recommendations))
        .route("/sessions/{token}/steps", post(record_step))
        .route("/export", get(export))
        .with_state(experiment)
}

/// Runs engine work that may call a remote provider off the async workers.
async fn blocking<T: Send + 'static>(
    experiment: Arc<Experiment>,
    work: impl FnOnce(&Experiment) -> Result<T, ServiceError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || work(&experiment))
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: e.to_string() })?
        .map_err(ApiError::from)
}

async fn regions(State(experiment): State<Arc<Experiment>>) -> Json<RegionsBody> {
    Json(RegionsBody { regions: experiment.regions() })
}

async fn create_session(
    State(experiment): State<Arc<Experiment>>,
    body: Result<Json<CreateSessionBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let Json(body) = body?;
    let created = blocking(experiment, move |e| e.create_session(&body.region)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn recommendations(
    State(experiment): State<Arc<Experiment>>,
    Path(token): Path<String>,
    query: Result<Query<CurrentQuery>, QueryRejection>,
) -> ApiResult<Json<ShownList>> {
    let Query(query) = query?;
    let current = ItemId::new(query.current).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(blocking(experiment, move |e| e.recommendations(&token, &current)).await?))
}

async fn record_step(
    State(experiment): State<Arc<Experiment>>,
    Path(token): Path<String>,
    body: Result<Json<StepSubmission>, JsonRejection>,
) -> ApiResult<Json<StepAck>> {
    let Json(submission) = body?;
    Ok(Json(blocking(experiment, move |e| e.record_step(&token, &submission)).await?))
}

async fn export(State(experiment): State<Arc<Experiment>>, headers: HeaderMap) -> ApiResult<Response> {
    let credential = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or_default()
        .to_owned();
    let body = blocking(experiment, move |e| e.export_jsonl(&credential)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
