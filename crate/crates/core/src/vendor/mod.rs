//! The vendor-cloud boundary.
//!
//! [`VendorCloud`] is the only surface the rest of the bridge talks to. Two
//! backends ship: [`Simulator`] (in-process, also servable over HTTP with
//! [`sim_router`]) and [`HttpVendorClient`], which speaks the simulator's
//! wire protocol. A real-vendor adapter plugs in by implementing the trait.

mod http;
mod sim;

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AccountHandle, LightState};

pub use http::HttpVendorClient;
pub use sim::{
    sim_router, Fixture, FixtureAccount, FixtureDevice, SimConfig, SimStats, Simulator,
    DEFAULT_LATENCY, DEFAULT_SESSION_TTL,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorSession {
    pub token: String,
    pub account: AccountHandle,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub vendor_device_id: String,
    pub alias: String,
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VendorError {
    #[error("bad vendor credentials")]
    BadCredentials,
    #[error("vendor session token is invalid or expired")]
    InvalidToken,
    #[error("unknown vendor device {0}")]
    UnknownDevice(String),
    #[error("vendor device {0} is offline")]
    DeviceOffline(String),
    #[error("transient vendor failure")]
    TransientFailure,
    #[error("vendor cloud unavailable: {0}")]
    CloudUnavailable(String),
    #[error("no vendor session for account {0}")]
    NoSession(AccountHandle),
    #[error("vendor protocol error: {0}")]
    Protocol(String),
}

impl VendorError {
    /// Stable identifier used on the simulator wire.
    pub fn code(&self) -> &'static str {
        match self {
            VendorError::BadCredentials => "BadCredentials",
            VendorError::InvalidToken => "InvalidToken",
            VendorError::UnknownDevice(_) => "UnknownDevice",
            VendorError::DeviceOffline(_) => "DeviceOffline",
            VendorError::TransientFailure => "TransientFailure",
            VendorError::CloudUnavailable(_) => "CloudUnavailable",
            VendorError::NoSession(_) => "NoSession",
            VendorError::Protocol(_) => "Protocol",
        }
    }

    /// Whether retrying the same call can succeed without outside help.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            VendorError::TransientFailure
                | VendorError::CloudUnavailable(_)
                | VendorError::DeviceOffline(_)
                | VendorError::Protocol(_)
        )
    }
}

#[async_trait]
pub trait VendorCloud: Send + Sync {
    async fn login(&self, username: &str, password: &str) -> Result<VendorSession, VendorError>;

    /// Devices owned by the session's account, ordered by id.
    async fn list_devices(&self, session: &VendorSession) -> Result<Vec<DeviceSummary>, VendorError>;

    async fn get_state(
        &self,
        session: &VendorSession,
        vendor_device_id: &str,
    ) -> Result<LightState, VendorError>;

    async fn set_state(
        &self,
        session: &VendorSession,
        vendor_device_id: &str,
        state: LightState,
    ) -> Result<(), VendorError>;
}

/// A vendor backend plus the session tokens obtained while pairing.
///
/// Only tokens are kept, never passwords, and only in memory.
pub struct VendorLink {
    cloud: Arc<dyn VendorCloud>,
    sessions: RwLock<HashMap<AccountHandle, VendorSession>>,
}

impl VendorLink {
    pub fn new(cloud: Arc<dyn VendorCloud>) -> Self {
        VendorLink {
            cloud,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn cloud(&self) -> &dyn VendorCloud {
        self.cloud.as_ref()
    }

    /// Log in and remember the session for the account it belongs to.
    pub async fn login(&self, username: &str, password: &str) -> Result<VendorSession, VendorError> {
        let session = self.cloud.login(username, password).await?;
        self.sessions
            .write()
            .insert(session.account.clone(), session.clone());
        Ok(session)
    }

    pub fn session_for(&self, account: &AccountHandle) -> Result<VendorSession, VendorError> {
        self.sessions
            .read()
            .get(account)
            .cloned()
            .ok_or_else(|| VendorError::NoSession(account.clone()))
    }

    pub fn remember(&self, session: VendorSession) {
        self.sessions.write().insert(session.account.clone(), session);
    }

    pub async fn set_state(
        &self,
        account: &AccountHandle,
        vendor_device_id: &str,
        state: LightState,
    ) -> Result<(), VendorError> {
        let session = self.session_for(account)?;
        self.cloud.set_state(&session, vendor_device_id, state).await
    }
}
