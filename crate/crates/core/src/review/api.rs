//! JSON-over-HTTP surface of the review service.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Decision, ReviewError, ReviewService, SessionMode};
use crate::dedup::DedupError;
use crate::gateway::GatewayError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    mode: SessionMode,
    #[serde(default)]
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuggestBody {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    max: Option<usize>,
}

#[derive(Serialize)]
struct DecisionResult {
    target: String,
    status: crate::dedup::ReviewStatus,
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<serde_json::Value>,
}

impl ApiError {
    fn bad_body(rejection: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "invalid_request",
            message: rejection.body_text(),
            extra: None,
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(err: ReviewError) -> Self {
        use ReviewError as E;
        let (status, code) = match &err {
            E::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            E::UnknownTarget(_) => (StatusCode::NOT_FOUND, "unknown_target"),
            E::MissingEditedPayload => (StatusCode::UNPROCESSABLE_ENTITY, "missing_edited_payload"),
            E::SessionAlreadyApplied(_) => (StatusCode::CONFLICT, "session_already_applied"),
            E::NothingToApply => (StatusCode::UNPROCESSABLE_ENTITY, "nothing_to_apply"),
            E::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            E::Dedup(DedupError::TooFewIssues(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "too_few_issues"),
            E::Dedup(DedupError::Config(_) | DedupError::Index(_)) => {
                (StatusCode::BAD_REQUEST, "invalid_config")
            }
            E::Dedup(_) => (StatusCode::BAD_GATEWAY, "detection_failed"),
            E::Gateway(GatewayError::AuthFailed { .. }) => (StatusCode::BAD_GATEWAY, "tracker_auth_failed"),
            E::Gateway(GatewayError::RateLimited { .. }) => {
                (StatusCode::SERVICE_UNAVAILABLE, "tracker_rate_limited")
            }
            E::Gateway(_) => (StatusCode::BAD_GATEWAY, "tracker_error"),
            E::Suggest(_) => (StatusCode::BAD_GATEWAY, "suggestion_failed"),
            E::Eval(_) => (StatusCode::INTERNAL_SERVER_ERROR, "evaluation_failed"),
            E::PartialFailure { .. } => (StatusCode::BAD_GATEWAY, "partial_failure"),
        };
        let extra = match &err {
            E::PartialFailure { receipts, failed } => Some(json!({"receipts": receipts, "failed": failed})),
            _ => None,
        };
        ApiError {
            status,
            code,
            message: err.to_string(),
            extra,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(serde_json::Value::Object(extra)) = self.extra {
            body.as_object_mut().expect("object").extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// Runs blocking service work off the async executor.
async fn blocking<T, F>(svc: &Arc<ReviewService>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ReviewService) -> Result<T, ReviewError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
            extra: None,
        })?
        .map_err(ApiError::from)
}

fn ok<T: Serialize>(status: StatusCode, value: T) -> ApiResult {
    Ok((status, Json(value)).into_response())
}

/// Parses an optional JSON body; an empty body means all defaults.
fn optional_body<T: Default + serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        code: "invalid_request",
        message: e.to_string(),
        extra: None,
    })
}

async fn create_session(State(svc): State<Arc<ReviewService>>, body: Bytes) -> ApiResult {
    let params: CreateSession = optional_body(&body)?;
    let session = blocking(&svc, move |s| s.start_session(params.mode, params.threshold)).await?;
    ok(StatusCode::CREATED, session)
}

async fn list_sessions(State(svc): State<Arc<ReviewService>>) -> ApiResult {
    ok(StatusCode::OK, svc.list_sessions())
}

async fn get_session(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> ApiResult {
    ok(StatusCode::OK, blocking(&svc, move |s| s.get_session(&id)).await?)
}

async fn candidates(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> ApiResult {
    ok(
        StatusCode::OK,
        blocking(&svc, move |s| s.candidate_rows(&id)).await?,
    )
}

async fn decide(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    body: Result<Json<Decision>, JsonRejection>,
) -> ApiResult {
    let Json(decision) = body.map_err(ApiError::bad_body)?;
    let target = decision.target.clone();
    let status = blocking(&svc, move |s| s.record_decision(&id, decision)).await?;
    ok(StatusCode::OK, DecisionResult { target, status })
}

async fn suggest(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let params: SuggestBody = optional_body(&body)?;
    let list = blocking(&svc, move |s| {
        s.request_suggestions(&id, params.prompt, params.max)
    })
    .await?;
    ok(StatusCode::OK, list)
}

async fn apply(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> ApiResult {
    ok(
        StatusCode::OK,
        blocking(&svc, move |s| s.apply_session(&id)).await?,
    )
}

async fn report(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> ApiResult {
    ok(StatusCode::OK, blocking(&svc, move |s| s.report(&id)).await?)
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such endpoint".into(),
        extra: None,
    }
}

pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/candidates", get(candidates))
        .route("/api/sessions/:id/decisions", post(decide))
        .route("/api/sessions/:id/suggestions", post(suggest))
        .route("/api/sessions/:id/apply", post(apply))
        .route("/api/sessions/:id/report", get(report))
        .fallback(not_found)
        .with_state(service)
}
