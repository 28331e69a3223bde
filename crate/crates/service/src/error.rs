use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// JSON error body: `{"error": {"status", "class", "message"}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub class: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, class: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            class: class.into(),
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn provider(class: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, class, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": {
                "status": self.status.as_u16(),
                "class": self.class,
                "message": self.message,
            }
        });
        (self.status, Json(body)).into_response()
    }
}
