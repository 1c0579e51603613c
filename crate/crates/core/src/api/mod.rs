//! HTTP service for experience clients and the pairing website.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/api/pair` | `{vendor_username, vendor_password, vendor_device_id}` | `{code, alias}` |
//! | GET | `/api/device/{code}/state` | | `{desired, reported, desired_revision, reported_revision, in_sync}` |
//! | PUT | `/api/device/{code}/state` | LightState | `{desired_revision}` |
//! | DELETE | `/api/device/{code}` | | 204, code revoked |
//! | POST | `/api/session` | `{code, seed?}` | `{session_id, phase}` |
//! | POST | `/api/session/{id}/event` | `{kind, gesture_id?}` | `{phase, cues, question_index}` |
//! | GET | `/api/session/{id}` | | full session view |
//! | GET | `/api/session/{id}/events` | | event log entries |
//!
//! Errors use [`ApiError`]; see [`ERROR_TABLE`].

mod error;
mod sessions;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, PathRejection};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::game::{GestureSet, DEFAULT_ANSWER_HOLD};
use crate::model::{validate_state, LightState, PairingCode, RawLightState};
use crate::registry::Registry;
use crate::vendor::{VendorError, VendorLink};

pub use error::{ApiError, ERROR_TABLE};
pub use sessions::{EventRequest, EventResponse, SessionCreated};
use sessions::SessionTable;

#[derive(Debug, Clone)]
pub struct ApiOptions {
    pub gestures: GestureSet,
    pub answer_hold: Duration,
    /// Fire `AnswerHoldElapsed` automatically after `answer_hold`.
    pub hold_timer: bool,
    /// Frozen timestamps and sequential session ids, for reproducible
    /// transcripts.
    pub test_mode: bool,
    /// Append every accepted session event as a JSON line here.
    pub event_log: Option<PathBuf>,
}

impl Default for ApiOptions {
    fn default() -> Self {
        ApiOptions {
            gestures: GestureSet::default(),
            answer_hold: DEFAULT_ANSWER_HOLD,
            hold_timer: true,
            test_mode: false,
            event_log: None,
        }
    }
}

impl ApiOptions {
    /// Test mode: frozen clock, sequential ids, and no hold timer (the
    /// client sends `AnswerHoldElapsed` itself).
    pub fn test_mode() -> Self {
        ApiOptions {
            hold_timer: false,
            test_mode: true,
            ..ApiOptions::default()
        }
    }
}

pub struct ApiState {
    registry: Arc<Registry>,
    link: Arc<VendorLink>,
    sessions: SessionTable,
    options: ApiOptions,
}

impl ApiState {
    pub fn new(
        registry: Arc<Registry>,
        link: Arc<VendorLink>,
        options: ApiOptions,
    ) -> std::io::Result<Arc<Self>> {
        let sessions = SessionTable::new(&options)?;
        Ok(Arc::new(ApiState {
            registry,
            link,
            sessions,
            options,
        }))
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    fn now(&self) -> DateTime<Utc> {
        if self.options.test_mode {
            DateTime::UNIX_EPOCH
        } else {
            Utc::now()
        }
    }
}

pub fn router(state: Arc<ApiState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/pair", post(pair))
        .route("/device/{code}/state", get(get_device_state).put(put_device_state))
        .route("/device/{code}", axum::routing::delete(revoke_device))
        .route("/session", post(sessions::create_session))
        .route("/session/{id}", get(sessions::get_session))
        .route("/session/{id}/event", post(sessions::post_event))
        .route("/session/{id}/events", get(sessions::get_events))
        .fallback(|| async { ApiError::not_found() })
        .method_not_allowed_fallback(|| async { ApiError::method_not_allowed() })
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { ApiError::not_found() }),
    };
    app.layer(TraceLayer::new_for_http())
}

pub(crate) fn parse_json<T: DeserializeOwned>(
    body: Result<Bytes, BytesRejection>,
) -> Result<T, ApiError> {
    let body = body.map_err(|e| ApiError::malformed(e.body_text()))?;
    serde_json::from_slice(&body).map_err(|e| ApiError::malformed(format!("invalid body: {e}")))
}

pub(crate) fn path_param(param: Result<Path<String>, PathRejection>) -> Result<String, ApiError> {
    param
        .map(|Path(p)| p)
        .map_err(|e| ApiError::malformed(e.body_text()))
}

fn parse_code(raw: &str) -> Result<PairingCode, ApiError> {
    raw.parse().map_err(|e: crate::model::InvalidCode| {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownCode", e.to_string())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRequest {
    pub vendor_username: String,
    pub vendor_password: String,
    pub vendor_device_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairResponse {
    pub code: PairingCode,
    pub alias: String,
}

/// Log in, check the device belongs to the account, read its state, and
/// register it. Nothing is registered if any vendor step fails.
async fn pair(
    State(state): State<Arc<ApiState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<PairResponse>, ApiError> {
    let req: PairRequest = parse_json(body)?;
    let session = state
        .link
        .login(&req.vendor_username, &req.vendor_password)
        .await?;
    let devices = state.link.cloud().list_devices(&session).await?;
    let device = devices
        .into_iter()
        .find(|d| d.vendor_device_id == req.vendor_device_id)
        .ok_or_else(|| VendorError::UnknownDevice(req.vendor_device_id.clone()))?;
    let reported = match state
        .link
        .cloud()
        .get_state(&session, &device.vendor_device_id)
        .await
    {
        Ok(s) => Some(s),
        Err(VendorError::DeviceOffline(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let record = state.registry.register_device(
        session.account.clone(),
        &device.vendor_device_id,
        &device.alias,
        reported,
    )?;
    tracing::info!(code = %record.code, device = %record.vendor_device_id, "paired");
    Ok(Json(PairResponse {
        code: record.code,
        alias: record.alias,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStateView {
    pub desired: LightState,
    pub reported: Option<LightState>,
    pub desired_revision: u64,
    pub reported_revision: u64,
    pub in_sync: bool,
}

async fn get_device_state(
    State(state): State<Arc<ApiState>>,
    code: Result<Path<String>, PathRejection>,
) -> Result<Json<DeviceStateView>, ApiError> {
    let code = parse_code(&path_param(code)?)?;
    let record = state.registry.get_record(&code)?;
    Ok(Json(DeviceStateView {
        desired: record.desired,
        reported: record.reported,
        desired_revision: record.desired_revision,
        reported_revision: record.reported_revision,
        in_sync: record.in_sync(),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PutStateResponse {
    pub desired_revision: u64,
}

/// Full-state replace of the desired state. The reconciler pushes it later.
async fn put_device_state(
    State(state): State<Arc<ApiState>>,
    code: Result<Path<String>, PathRejection>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<PutStateResponse>, ApiError> {
    let code = parse_code(&path_param(code)?)?;
    let raw: RawLightState = parse_json(body)?;
    // Unknown codes win over bad bodies so clients learn about the code first.
    state.registry.get_record(&code)?;
    let light = validate_state(raw)?;
    let desired_revision = state.registry.set_desired(&code, light)?;
    Ok(Json(PutStateResponse { desired_revision }))
}

async fn revoke_device(
    State(state): State<Arc<ApiState>>,
    code: Result<Path<String>, PathRejection>,
) -> Result<StatusCode, ApiError> {
    let code = parse_code(&path_param(code)?)?;
    state.registry.revoke(&code)?;
    Ok(StatusCode::NO_CONTENT)
}
