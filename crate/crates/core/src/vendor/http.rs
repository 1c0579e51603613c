use std::time::Duration;

use async_trait::async_trait;
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;

use super::sim::{LoginRequest, WireError};
use super::{DeviceSummary, VendorCloud, VendorError, VendorSession};
use crate::model::LightState;

/// Client for the simulator wire protocol (`/v1/...`).
#[derive(Clone)]
pub struct HttpVendorClient {
    base: reqwest::Url,
    http: reqwest::Client,
}

impl HttpVendorClient {
    pub fn new(base_url: &str) -> Result<Self, VendorError> {
        let base = reqwest::Url::parse(base_url)
            .map_err(|e| VendorError::Protocol(format!("bad vendor url {base_url:?}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(VendorError::Protocol(format!("bad vendor url {base_url:?}")));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("reqwest client");
        Ok(HttpVendorClient { base, http })
    }

    fn request(
        &self,
        method: Method,
        segments: &[&str],
        session: Option<&VendorSession>,
    ) -> RequestBuilder {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("base url must be hierarchical")
            .pop_if_empty()
            .extend(segments);
        let req = self.http.request(method, url);
        match session {
            Some(s) => req.bearer_auth(&s.token),
            None => req,
        }
    }

    async fn send(&self, req: RequestBuilder, device: &str) -> Result<reqwest::Response, VendorError> {
        let resp = req
            .send()
            .await
            .map_err(|e| VendorError::CloudUnavailable(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let body: Option<WireError> = resp.json().await.ok();
        Err(match body.as_ref().map(|b| b.error.as_str()) {
            Some("BadCredentials") => VendorError::BadCredentials,
            Some("InvalidToken") => VendorError::InvalidToken,
            Some("UnknownDevice") => VendorError::UnknownDevice(device.to_owned()),
            Some("DeviceOffline") => VendorError::DeviceOffline(device.to_owned()),
            Some("TransientFailure") => VendorError::TransientFailure,
            Some("CloudUnavailable") => {
                VendorError::CloudUnavailable(body.map(|b| b.message).unwrap_or_default())
            }
            _ if status == StatusCode::SERVICE_UNAVAILABLE || status.is_server_error() => {
                VendorError::CloudUnavailable(format!("HTTP {status}"))
            }
            _ => VendorError::Protocol(format!("unexpected HTTP {status}")),
        })
    }

    async fn json<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, VendorError> {
        resp.json()
            .await
            .map_err(|e| VendorError::Protocol(e.to_string()))
    }
}

#[async_trait]
impl VendorCloud for HttpVendorClient {
    async fn login(&self, username: &str, password: &str) -> Result<VendorSession, VendorError> {
        let req = self.request(Method::POST, &["v1", "login"], None).json(&LoginRequest {
            username: username.to_owned(),
            password: password.to_owned(),
        });
        Self::json(self.send(req, "").await?).await
    }

    async fn list_devices(&self, session: &VendorSession) -> Result<Vec<DeviceSummary>, VendorError> {
        let req = self.request(Method::GET, &["v1", "devices"], Some(session));
        Self::json(self.send(req, "").await?).await
    }

    async fn get_state(&self, session: &VendorSession, id: &str) -> Result<LightState, VendorError> {
        let req = self.request(Method::GET, &["v1", "devices", id, "state"], Some(session));
        Self::json(self.send(req, id).await?).await
    }

    async fn set_state(
        &self,
        session: &VendorSession,
        id: &str,
        state: LightState,
    ) -> Result<(), VendorError> {
        let req = self
            .request(Method::PUT, &["v1", "devices", id, "state"], Some(session))
            .json(&state);
        self.send(req, id).await.map(|_| ())
    }
}
