use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use stresslab_core::session::SessionError;
use stresslab_core::store::StoreError;

/// Error returned to clients as `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn not_found(id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    pub fn finalized(id: &str) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, "finalized", format!("session {id} is finalized"))
    }

    pub fn protocol(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, "protocol_violation", message)
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn storage(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message)
    }

    pub fn body_json(&self) -> serde_json::Value {
        serde_json::to_value(Body {
            error: Detail {
                code: self.code,
                message: &self.message,
            },
        })
        .expect("error body serialises")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let code = match &e {
            SessionError::TerminalState => "terminal_state",
            SessionError::LevelComplete(_) => "level_complete",
            SessionError::Answer(_) => "invalid_answer",
            SessionError::LogIntegrity(_) => "log_integrity",
            SessionError::ClockRegression { .. } => "clock_regression",
            SessionError::ProtocolViolation(_) => "protocol_violation",
        };
        let status = match &e {
            SessionError::Answer(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::LogIntegrity(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        ApiError::storage(e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body_json())).into_response()
    }
}
