//! JSON HTTP API over an [`Engine`].
//!
//! Every body, success or error, is one of the types below. Bodies sent to
//! the API reject unknown fields.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use studymate::{
    default_profile, AssessmentReport, Engine, EngineError, IntentCategory, LearnerProfile,
    ProfileDelta, RuleId, StudentId,
};

/// Seconds a client should wait before retrying after a provider failure.
pub const PROVIDER_RETRY_SECS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    ProviderUnavailable,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::ProviderUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_secs: Option<u64>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            retry_after_secs: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::EmptyMessage => ApiError::bad_request(e.to_string()),
            EngineError::Profile(_) => ApiError::bad_request(e.to_string()),
            EngineError::UnknownSession(_) | EngineError::UnknownLearner(_) => {
                ApiError::new(ErrorCode::NotFound, e.to_string())
            }
            EngineError::Provider(inner) => {
                tracing::warn!(error = %inner, "provider call failed");
                ApiError {
                    code: ErrorCode::ProviderUnavailable,
                    message: format!(
                        "the model provider did not answer ({inner}); the message was recorded, send it again later"
                    ),
                    retry_after_secs: Some(PROVIDER_RETRY_SECS),
                }
            }
            other => {
                tracing::error!(error = %other, "request failed");
                ApiError::new(ErrorCode::Internal, "internal error")
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.code.status();
        let retry = self.retry_after_secs;
        let mut response = (status, Json(self)).into_response();
        if let Some(secs) = retry {
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSessionRequest {
    pub student_id: String,
    /// Creates the learner when no profile exists yet.
    #[serde(default)]
    pub grade: Option<i64>,
    #[serde(default)]
    pub subjects: Vec<String>,
    #[serde(default)]
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionInfo {
    pub session_id: String,
    pub student_id: String,
    pub active_subject: IntentCategory,
    pub provider: String,
    pub started_at: String,
    pub learner_created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageResponse {
    pub reply: String,
    pub routed: IntentCategory,
    pub active_subject: IntentCategory,
    pub fired_rules: Vec<RuleId>,
    pub strategy: String,
    pub profile_delta: ProfileDelta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedSession {
    pub session_id: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptView {
    pub session_id: String,
    /// `None` until the session's first turn.
    pub system_prompt: Option<String>,
    pub fired_rules: Vec<RuleId>,
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn student_id(raw: &str) -> Result<StudentId, ApiError> {
    StudentId::new(raw).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn open_session(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<OpenSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let Json(req) = body?;
    let id = student_id(&req.student_id)?;
    let mut created = false;
    if let Some(grade) = req.grade {
        let subjects: Vec<&str> = req.subjects.iter().map(String::as_str).collect();
        let profile = default_profile(id.as_str(), grade, &subjects, &req.goal)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        created = engine.register_learner(&profile).await?;
    }
    let state = engine.open_session(&id).await?;
    Ok((
        StatusCode::CREATED,
        Json(SessionInfo {
            session_id: state.session_id,
            student_id: state.student_id.to_string(),
            active_subject: state.active_subject,
            provider: state.provider,
            started_at: state.started_at.to_rfc3339(),
            learner_created: created,
        }),
    ))
}

async fn post_message(
    State(engine): State<Arc<Engine>>,
    Path(session_id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> ApiResult<MessageResponse> {
    let Json(req) = body?;
    let out = engine.handle_turn(&session_id, &req.text).await?;
    Ok(Json(MessageResponse {
        reply: out.reply,
        routed: out.routed,
        active_subject: out.active_subject,
        fired_rules: out.strategy.fired,
        strategy: out.strategy.rendered,
        profile_delta: out.delta,
    }))
}

async fn close_session(
    State(engine): State<Arc<Engine>>,
    Path(session_id): Path<String>,
) -> ApiResult<ClosedSession> {
    let record = engine.close_session(&session_id).await?;
    Ok(Json(ClosedSession {
        session_id,
        summary: record.content,
    }))
}

async fn session_prompt(
    State(engine): State<Arc<Engine>>,
    Path(session_id): Path<String>,
) -> ApiResult<PromptView> {
    let state = engine.session(&session_id).await?;
    Ok(Json(PromptView {
        session_id,
        system_prompt: state.last_prompt.map(|p| p.system_prompt),
        fired_rules: state.last_strategy.map(|s| s.fired).unwrap_or_default(),
    }))
}

async fn learner_profile(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
) -> ApiResult<LearnerProfile> {
    Ok(Json(engine.profile(&student_id(&id)?)?))
}

async fn learner_assessment(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
) -> ApiResult<AssessmentReport> {
    Ok(Json(engine.assessment(&student_id(&id)?)?))
}

async fn no_route() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn wrong_method() -> ApiError {
    ApiError::bad_request("method not allowed on this endpoint")
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", delete(close_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/prompt", get(session_prompt))
        .route("/learners/{id}/profile", get(learner_profile))
        .route("/learners/{id}/assessment", get(learner_assessment))
        .fallback(no_route)
        .method_not_allowed_fallback(wrong_method)
        .with_state(engine)
}
