//! Protocol-shaped stand-in for a vendor light cloud.
//!
//! Fault injection is seeded: the n-th `set_state` call that reaches a
//! device consumes the n-th draw of the fault generator, so a run with the
//! same seed and the same call order fails the same calls.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::Utc;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DeviceSummary, VendorCloud, VendorError, VendorSession};
use crate::model::{AccountHandle, LightState};

pub const DEFAULT_LATENCY: Duration = Duration::from_millis(30);
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(24 * 60 * 60);

/// Fixture file: accounts, each owning devices with an initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub accounts: Vec<FixtureAccount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureAccount {
    pub username: String,
    pub password: String,
    /// Account handle; defaults to `acct-<username>`.
    #[serde(default)]
    pub account: Option<String>,
    pub devices: Vec<FixtureDevice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDevice {
    pub vendor_device_id: String,
    pub alias: String,
    pub state: LightState,
    #[serde(default = "default_online")]
    pub online: bool,
    /// Overrides the simulator-wide latency for this device.
    #[serde(default)]
    pub latency_ms: Option<u64>,
    #[serde(default)]
    pub fail_probability: f64,
}

fn default_online() -> bool {
    true
}

impl Fixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| format!("{}: {e}", path.as_ref().display()))?;
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| format!("{}: {e}", path.as_ref().display()))?;
        fixture.check()?;
        Ok(fixture)
    }

    fn check(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for account in &self.accounts {
            for device in &account.devices {
                if device.vendor_device_id.is_empty() {
                    return Err("empty vendor_device_id in fixture".into());
                }
                if !seen.insert(&device.vendor_device_id) {
                    return Err(format!(
                        "duplicate vendor_device_id {:?} in fixture",
                        device.vendor_device_id
                    ));
                }
                if !(0.0..=1.0).contains(&device.fail_probability) {
                    return Err(format!(
                        "fail_probability for {:?} must be in [0,1]",
                        device.vendor_device_id
                    ));
                }
            }
        }
        Ok(())
    }

    /// `demo`/`demo` with a desk lamp and a ceiling light, both healthy.
    pub fn demo() -> Self {
        Fixture {
            accounts: vec![FixtureAccount {
                username: "demo".into(),
                password: "demo".into(),
                account: None,
                devices: vec![
                    FixtureDevice {
                        vendor_device_id: "bulb-1".into(),
                        alias: "Desk Lamp".into(),
                        state: LightState::WHITE,
                        online: true,
                        latency_ms: None,
                        fail_probability: 0.0,
                    },
                    FixtureDevice {
                        vendor_device_id: "bulb-2".into(),
                        alias: "Ceiling Light".into(),
                        state: LightState::OFF,
                        online: true,
                        latency_ms: None,
                        fail_probability: 0.0,
                    },
                ],
            }],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub fault_seed: u64,
    /// Applied to devices whose fixture entry has no `latency_ms`.
    pub latency: Duration,
    pub session_ttl: Duration,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            fault_seed: 0,
            latency: DEFAULT_LATENCY,
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub login_calls: u64,
    pub list_calls: u64,
    pub get_calls: u64,
    pub set_calls: u64,
    /// Sets that changed device state.
    pub mutations: u64,
    pub failed_sets: u64,
}

struct SimDevice {
    alias: String,
    owner: AccountHandle,
    state: LightState,
    online: bool,
    latency: Duration,
    fail_probability: f64,
    /// Serializes state updates per device, held across the latency.
    gate: Arc<tokio::sync::Mutex<()>>,
}

struct Account {
    password: String,
    handle: AccountHandle,
}

struct SimState {
    accounts: HashMap<String, Account>,
    devices: BTreeMap<String, SimDevice>,
    sessions: HashMap<String, VendorSession>,
    fault_rng: ChaCha8Rng,
    available: bool,
}

#[derive(Default)]
struct Counters {
    login: AtomicU64,
    list: AtomicU64,
    get: AtomicU64,
    set: AtomicU64,
    mutations: AtomicU64,
    failed_sets: AtomicU64,
}

pub struct Simulator {
    state: Mutex<SimState>,
    counters: Counters,
    session_ttl: Duration,
}

impl Simulator {
    pub fn new(fixture: &Fixture, config: SimConfig) -> Self {
        let mut accounts = HashMap::new();
        let mut devices = BTreeMap::new();
        for account in &fixture.accounts {
            let handle = AccountHandle(
                account
                    .account
                    .clone()
                    .unwrap_or_else(|| format!("acct-{}", account.username)),
            );
            for d in &account.devices {
                devices.insert(
                    d.vendor_device_id.clone(),
                    SimDevice {
                        alias: d.alias.clone(),
                        owner: handle.clone(),
                        state: d.state,
                        online: d.online,
                        latency: d.latency_ms.map(Duration::from_millis).unwrap_or(config.latency),
                        fail_probability: d.fail_probability.clamp(0.0, 1.0),
                        gate: Arc::new(tokio::sync::Mutex::new(())),
                    },
                );
            }
            accounts.insert(
                account.username.clone(),
                Account {
                    password: account.password.clone(),
                    handle,
                },
            );
        }
        Simulator {
            state: Mutex::new(SimState {
                accounts,
                devices,
                sessions: HashMap::new(),
                fault_rng: ChaCha8Rng::seed_from_u64(config.fault_seed),
                available: true,
            }),
            counters: Counters::default(),
            session_ttl: config.session_ttl,
        }
    }

    pub fn stats(&self) -> SimStats {
        let c = &self.counters;
        SimStats {
            login_calls: c.login.load(Ordering::SeqCst),
            list_calls: c.list.load(Ordering::SeqCst),
            get_calls: c.get.load(Ordering::SeqCst),
            set_calls: c.set.load(Ordering::SeqCst),
            mutations: c.mutations.load(Ordering::SeqCst),
            failed_sets: c.failed_sets.load(Ordering::SeqCst),
        }
    }

    /// Take the whole cloud down (every call fails `CloudUnavailable`) or
    /// bring it back.
    pub fn set_available(&self, available: bool) {
        self.state.lock().available = available;
    }

    pub fn set_online(&self, vendor_device_id: &str, online: bool) -> bool {
        self.with_device(vendor_device_id, |d| d.online = online)
    }

    pub fn set_fail_probability(&self, vendor_device_id: &str, p: f64) -> bool {
        self.with_device(vendor_device_id, |d| d.fail_probability = p.clamp(0.0, 1.0))
    }

    pub fn set_latency(&self, vendor_device_id: &str, latency: Duration) -> bool {
        self.with_device(vendor_device_id, |d| d.latency = latency)
    }

    /// Current device state, bypassing auth and fault injection.
    pub fn device_state(&self, vendor_device_id: &str) -> Option<LightState> {
        self.state.lock().devices.get(vendor_device_id).map(|d| d.state)
    }

    pub fn expire_sessions(&self) {
        self.state.lock().sessions.clear();
    }

    fn with_device(&self, id: &str, f: impl FnOnce(&mut SimDevice)) -> bool {
        match self.state.lock().devices.get_mut(id) {
            Some(d) => {
                f(d);
                true
            }
            None => false,
        }
    }

    fn ensure_available(state: &SimState) -> Result<(), VendorError> {
        if state.available {
            Ok(())
        } else {
            Err(VendorError::CloudUnavailable("simulator is down".into()))
        }
    }

    fn authorize(state: &SimState, session: &VendorSession) -> Result<AccountHandle, VendorError> {
        match state.sessions.get(&session.token) {
            Some(s) if s.expires_at > Utc::now() => Ok(s.account.clone()),
            _ => Err(VendorError::InvalidToken),
        }
    }

    /// Auth, ownership and online checks; returns the device's gate and latency.
    fn admit(
        &self,
        session: &VendorSession,
        id: &str,
    ) -> Result<(Arc<tokio::sync::Mutex<()>>, Duration), VendorError> {
        let state = self.state.lock();
        Self::ensure_available(&state)?;
        let account = Self::authorize(&state, session)?;
        let device = state
            .devices
            .get(id)
            .filter(|d| d.owner == account)
            .ok_or_else(|| VendorError::UnknownDevice(id.to_owned()))?;
        if !device.online {
            return Err(VendorError::DeviceOffline(id.to_owned()));
        }
        Ok((device.gate.clone(), device.latency))
    }
}

#[async_trait]
impl VendorCloud for Simulator {
    async fn login(&self, username: &str, password: &str) -> Result<VendorSession, VendorError> {
        self.counters.login.fetch_add(1, Ordering::SeqCst);
        let mut state = self.state.lock();
        Self::ensure_available(&state)?;
        let account = match state.accounts.get(username) {
            Some(a) if a.password == password => a.handle.clone(),
            _ => return Err(VendorError::BadCredentials),
        };
        let session = VendorSession {
            token: format!("{:032x}", rand::random::<u128>()),
            account,
            expires_at: Utc::now()
                + chrono::Duration::from_std(self.session_ttl).unwrap_or(chrono::Duration::MAX),
        };
        state.sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    async fn list_devices(&self, session: &VendorSession) -> Result<Vec<DeviceSummary>, VendorError> {
        self.counters.list.fetch_add(1, Ordering::SeqCst);
        let state = self.state.lock();
        Self::ensure_available(&state)?;
        let account = Self::authorize(&state, session)?;
        // BTreeMap iteration gives the id ordering.
        Ok(state
            .devices
            .iter()
            .filter(|(_, d)| d.owner == account)
            .map(|(id, d)| DeviceSummary {
                vendor_device_id: id.clone(),
                alias: d.alias.clone(),
                online: d.online,
            })
            .collect())
    }

    async fn get_state(&self, session: &VendorSession, id: &str) -> Result<LightState, VendorError> {
        self.counters.get.fetch_add(1, Ordering::SeqCst);
        let (gate, latency) = self.admit(session, id)?;
        let _serial = gate.lock().await;
        tokio::time::sleep(latency).await;
        let state = self.state.lock();
        Self::ensure_available(&state)?;
        state
            .devices
            .get(id)
            .map(|d| d.state)
            .ok_or_else(|| VendorError::UnknownDevice(id.to_owned()))
    }

    async fn set_state(
        &self,
        session: &VendorSession,
        id: &str,
        new_state: LightState,
    ) -> Result<(), VendorError> {
        self.counters.set.fetch_add(1, Ordering::SeqCst);
        let (gate, latency) = self.admit(session, id)?;
        let _serial = gate.lock().await;
        tokio::time::sleep(latency).await;
        let mut state = self.state.lock();
        Self::ensure_available(&state)?;
        let p = match state.devices.get(id) {
            Some(d) if !d.online => return Err(VendorError::DeviceOffline(id.to_owned())),
            Some(d) => d.fail_probability,
            None => return Err(VendorError::UnknownDevice(id.to_owned())),
        };
        let roll: f64 = state.fault_rng.random();
        if roll < p {
            self.counters.failed_sets.fetch_add(1, Ordering::SeqCst);
            return Err(VendorError::TransientFailure);
        }
        if let Some(d) = state.devices.get_mut(id) {
            d.state = new_state;
        }
        self.counters.mutations.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

// ---- HTTP surface ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub(super) struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Serialize, Deserialize)]
pub(super) struct WireError {
    pub error: String,
    pub message: String,
}

#[derive(Deserialize)]
struct AvailabilityRequest {
    available: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceAdminRequest {
    online: Option<bool>,
    fail_probability: Option<f64>,
    latency_ms: Option<u64>,
}

struct SimResponse(VendorError);

impl IntoResponse for SimResponse {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            VendorError::BadCredentials | VendorError::InvalidToken | VendorError::NoSession(_) => {
                StatusCode::UNAUTHORIZED
            }
            VendorError::UnknownDevice(_) => StatusCode::NOT_FOUND,
            VendorError::DeviceOffline(_) => StatusCode::CONFLICT,
            VendorError::TransientFailure | VendorError::CloudUnavailable(_) => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            VendorError::Protocol(_) => StatusCode::BAD_REQUEST,
        };
        let body = WireError {
            error: self.0.code().to_owned(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Result<VendorSession, SimResponse> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(SimResponse(VendorError::InvalidToken))?;
    // Only the token is checked; account and expiry come from the server side.
    Ok(VendorSession {
        token: token.to_owned(),
        account: AccountHandle(String::new()),
        expires_at: Utc::now(),
    })
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, SimResponse> {
    serde_json::from_slice(body).map_err(|e| SimResponse(VendorError::Protocol(e.to_string())))
}

/// HTTP routes for a simulator:
///
/// | method | path | body | success |
/// |---|---|---|---|
/// | POST | `/v1/login` | `{username,password}` | 200 session |
/// | GET | `/v1/devices` | | 200 device list |
/// | GET | `/v1/devices/{id}/state` | | 200 LightState |
/// | PUT | `/v1/devices/{id}/state` | LightState | 204 |
/// | GET | `/v1/stats` | | 200 call counters |
/// | PUT | `/v1/admin/availability` | `{available}` | 204 |
/// | PUT | `/v1/admin/devices/{id}` | `{online?,fail_probability?,latency_ms?}` | 204 |
pub fn sim_router(sim: Arc<Simulator>) -> Router {
    Router::new()
        .route("/v1/login", post(login))
        .route("/v1/devices", get(list_devices))
        .route("/v1/devices/{id}/state", get(get_state).put(set_state))
        .route("/v1/stats", get(stats))
        .route("/v1/admin/availability", put(admin_availability))
        .route("/v1/admin/devices/{id}", put(admin_device))
        .with_state(sim)
}

async fn login(
    State(sim): State<Arc<Simulator>>,
    body: axum::body::Bytes,
) -> Result<Json<VendorSession>, SimResponse> {
    let req: LoginRequest = parse_body(&body)?;
    sim.login(&req.username, &req.password)
        .await
        .map(Json)
        .map_err(SimResponse)
}

async fn list_devices(
    State(sim): State<Arc<Simulator>>,
    headers: HeaderMap,
) -> Result<Json<Vec<DeviceSummary>>, SimResponse> {
    let session = bearer(&headers)?;
    sim.list_devices(&session).await.map(Json).map_err(SimResponse)
}

async fn get_state(
    State(sim): State<Arc<Simulator>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Json<LightState>, SimResponse> {
    let session = bearer(&headers)?;
    sim.get_state(&session, &id).await.map(Json).map_err(SimResponse)
}

async fn set_state(
    State(sim): State<Arc<Simulator>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<StatusCode, SimResponse> {
    let session = bearer(&headers)?;
    let state: LightState = parse_body(&body)?;
    sim.set_state(&session, &id, state)
        .await
        .map(|()| StatusCode::NO_CONTENT)
        .map_err(SimResponse)
}

async fn stats(State(sim): State<Arc<Simulator>>) -> Json<SimStats> {
    Json(sim.stats())
}

async fn admin_availability(
    State(sim): State<Arc<Simulator>>,
    body: axum::body::Bytes,
) -> Result<StatusCode, SimResponse> {
    let req: AvailabilityRequest = parse_body(&body)?;
    sim.set_available(req.available);
    Ok(StatusCode::NO_CONTENT)
}

async fn admin_device(
    State(sim): State<Arc<Simulator>>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<StatusCode, SimResponse> {
    let req: DeviceAdminRequest = parse_body(&body)?;
    let unknown = || SimResponse(VendorError::UnknownDevice(id.clone()));
    if let Some(online) = req.online {
        sim.set_online(&id, online).then_some(()).ok_or_else(unknown)?;
    }
    if let Some(p) = req.fail_probability {
        sim.set_fail_probability(&id, p).then_some(()).ok_or_else(unknown)?;
    }
    if let Some(ms) = req.latency_ms {
        sim.set_latency(&id, Duration::from_millis(ms))
            .then_some(())
            .ok_or_else(unknown)?;
    }
    if sim.device_state(&id).is_none() {
        return Err(unknown());
    }
    Ok(StatusCode::NO_CONTENT)
}
