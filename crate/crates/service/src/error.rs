use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ccg_core::Error;
use serde::Serialize;

/// An error response: status code plus a JSON body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    /// The offending input, for parse failures.
    pub fragment: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    fragment: Option<&'a str>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            fragment: None,
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no episode {id:?}"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { fragment, reason } => Self {
                status: StatusCode::BAD_REQUEST,
                message: format!("cannot parse prompt: {reason}"),
                fragment: Some(fragment),
            },
            Error::InvalidArgument(m) => Self::bad_request(m),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(message = %self.message, "request failed");
        }
        let body = Body {
            error: &self.message,
            fragment: self.fragment.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}
