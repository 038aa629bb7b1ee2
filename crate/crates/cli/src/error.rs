use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use steerlsh_core::Error;

/// Error payload of every failed request and of every failed CLI command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), http_status: status.as_u16() }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn train_in_flight() -> Self {
        Self::new(StatusCode::CONFLICT, "train_in_flight", "another train request is running for this session")
    }

    pub fn session_changed() -> Self {
        Self::new(StatusCode::CONFLICT, "session_changed", "the session changed while the request was running")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

/// HTTP status of each engine error; the code is `Error::code`.
pub fn status_of(err: &Error) -> StatusCode {
    match err {
        Error::Io(_) | Error::Document(_) => StatusCode::INTERNAL_SERVER_ERROR,
        Error::Format { .. }
        | Error::Parse { .. }
        | Error::EmptyDataset
        | Error::InvalidSeries(_)
        | Error::UnknownTrack { .. }
        | Error::InvalidConfig(_)
        | Error::EmptyInput => StatusCode::BAD_REQUEST,
        Error::WindowTooLarge { .. }
        | Error::Shape(_)
        | Error::EmptyCandidates { .. }
        | Error::NoPositiveTables
        | Error::NoPositiveSamples
        | Error::IndexOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Error::NoQuery => StatusCode::CONFLICT,
        Error::UnknownNode(_) => StatusCode::NOT_FOUND,
        Error::ResourceExhausted { .. } => StatusCode::INSUFFICIENT_STORAGE,
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        Self::new(status_of(&err), err.code(), err.to_string())
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
        (self.status(), Json(self)).into_response()
    }
}
