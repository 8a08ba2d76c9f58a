use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use guesswho_core::{CatalogError, ClassifierError};
use guesswho_core::engine::EngineError;

/// JSON error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code, message: message.into(), detail: None } }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn session_not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no live session {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let message = e.to_string();
        match e {
            CatalogError::Miss { name, nearest } => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_attribute", message)
                    .with_detail(json!({ "attribute": name, "nearest": nearest }))
            }
            CatalogError::Validation(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_prompt", message),
            CatalogError::Format { .. } | CatalogError::Io(_) => ApiError::internal(message),
        }
    }
}

impl From<ClassifierError> for ApiError {
    fn from(e: ClassifierError) -> Self {
        let message = e.to_string();
        match e {
            ClassifierError::Decode { image_ref, reason } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "image_decode_failed", message)
                    .with_detail(json!({ "image": image_ref, "reason": reason }))
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "backend_error", message),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::GameOver => ApiError::new(StatusCode::CONFLICT, "game_over", e.to_string()),
            EngineError::InvalidTarget(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_target", e.to_string())
            }
            EngineError::InvalidBoard(_) | EngineError::DuplicateImage(_) => ApiError::internal(e.to_string()),
            EngineError::Catalog(c) => c.into(),
            EngineError::Backend(b) => b.into(),
        }
    }
}
