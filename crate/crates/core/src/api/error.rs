use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use crate::game::GameError;
use crate::model::ValidationError;
use crate::registry::RegistryError;
use crate::vendor::VendorError;

/// Error body returned by every bridge endpoint.
///
/// | status | error_code | raised by |
/// |---|---|---|
/// | 400 | `MalformedRequest` | unparseable JSON, missing fields, unknown event kind, empty device id |
/// | 401 | `BadCredentials` | vendor rejected the username/password |
/// | 404 | `UnknownDevice` | device not in the vendor account |
/// | 404 | `UnknownCode` | no record for the pairing code, or not a 5-digit code |
/// | 404 | `UnknownSession` | no such game session |
/// | 404 | `NotFound` | no such route |
/// | 405 | `MethodNotAllowed` | route exists, method does not |
/// | 409 | `InvalidTransition` | event not allowed in the session's phase |
/// | 410 | `Revoked` | pairing code was revoked |
/// | 422 | `OutOfRange` | light state field outside its range (`fields` lists them) |
/// | 422 | `UnknownGesture` | gesture not in the configured set |
/// | 500 | `Internal` | broken internal invariant |
/// | 502 | `CloudUnavailable` | vendor cloud down, failing, or rejecting our token |
/// | 503 | `StoreUnavailable` | registry persistence failed |
/// | 507 | `Exhausted` | no free pairing code could be drawn |
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub http_status: u16,
    pub error_code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
}

impl ApiError {
    pub fn new(status: StatusCode, error_code: &str, message: impl Into<String>) -> Self {
        ApiError {
            http_status: status.as_u16(),
            error_code: error_code.to_owned(),
            message: message.into(),
            fields: None,
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedRequest", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UnknownSession",
            format!("unknown session {id}"),
        )
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
    }

    pub fn method_not_allowed() -> Self {
        Self::new(
            StatusCode::METHOD_NOT_ALLOWED,
            "MethodNotAllowed",
            "method not allowed on this route",
        )
    }
}

/// Every `(status, error_code)` pair the bridge can return.
pub const ERROR_TABLE: &[(u16, &str)] = &[
    (400, "MalformedRequest"),
    (401, "BadCredentials"),
    (404, "UnknownDevice"),
    (404, "UnknownCode"),
    (404, "UnknownSession"),
    (404, "NotFound"),
    (405, "MethodNotAllowed"),
    (409, "InvalidTransition"),
    (410, "Revoked"),
    (422, "OutOfRange"),
    (422, "UnknownGesture"),
    (500, "Internal"),
    (502, "CloudUnavailable"),
    (503, "StoreUnavailable"),
    (507, "Exhausted"),
];

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let (status, code) = match &e {
            RegistryError::EmptyDeviceId => (StatusCode::BAD_REQUEST, "MalformedRequest"),
            RegistryError::UnknownCode(_) => (StatusCode::NOT_FOUND, "UnknownCode"),
            RegistryError::Revoked(_) => (StatusCode::GONE, "Revoked"),
            RegistryError::Exhausted { .. } => (StatusCode::INSUFFICIENT_STORAGE, "Exhausted"),
            RegistryError::StoreUnavailable(_) => {
                (StatusCode::SERVICE_UNAVAILABLE, "StoreUnavailable")
            }
            RegistryError::RevisionAhead { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<VendorError> for ApiError {
    fn from(e: VendorError) -> Self {
        let (status, code) = match &e {
            VendorError::BadCredentials => (StatusCode::UNAUTHORIZED, "BadCredentials"),
            VendorError::UnknownDevice(_) => (StatusCode::NOT_FOUND, "UnknownDevice"),
            VendorError::InvalidToken
            | VendorError::DeviceOffline(_)
            | VendorError::TransientFailure
            | VendorError::CloudUnavailable(_)
            | VendorError::NoSession(_)
            | VendorError::Protocol(_) => (StatusCode::BAD_GATEWAY, "CloudUnavailable"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        let (status, code) = match &e {
            GameError::InvalidTransition { .. } => (StatusCode::CONFLICT, "InvalidTransition"),
            GameError::UnknownGesture(_) => (StatusCode::UNPROCESSABLE_ENTITY, "UnknownGesture"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "OutOfRange", e.to_string());
        err.fields = Some(e.fields().iter().map(ToString::to_string).collect());
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.http_status, self.error_code, self.message)
    }
}

impl std::error::Error for ApiError {}
