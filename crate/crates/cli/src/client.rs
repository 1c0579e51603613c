//! Thin JSON client for the bridge API.

use lightbridge::api::ApiError;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {}", .0.error_code, .0.message)]
    Api(ApiError),
    #[error("cannot reach {url}: {reason}")]
    Connect { url: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Startup(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Api(_) => 3,
            CliError::Connect { .. } => 4,
            CliError::Startup(_) | CliError::Io(_) => 1,
        }
    }
}

pub struct BridgeClient {
    base: String,
    http: reqwest::Client,
}

impl BridgeClient {
    pub fn new(base: &str) -> Self {
        BridgeClient {
            base: base.trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, CliError> {
        self.send(Method::GET, path, None::<&()>).await
    }

    pub async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, CliError> {
        self.send(Method::POST, path, Some(body)).await
    }

    pub async fn put<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, CliError> {
        self.send(Method::PUT, path, Some(body)).await
    }

    async fn send<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, CliError> {
        let url = format!("{}{path}", self.base);
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let connect = |e: reqwest::Error| CliError::Connect {
            url: self.base.clone(),
            reason: e.to_string(),
        };
        let resp = req.send().await.map_err(connect)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(connect)?;
        if status.is_success() {
            let text: &[u8] = if status == StatusCode::NO_CONTENT { b"null" } else { &bytes };
            return serde_json::from_slice(text).map_err(|e| protocol(&url, e));
        }
        match serde_json::from_slice::<ApiError>(&bytes) {
            Ok(err) => Err(CliError::Api(err)),
            Err(e) => Err(protocol(&url, e)),
        }
    }
}

fn protocol(url: &str, e: serde_json::Error) -> CliError {
    CliError::Connect {
        url: url.to_owned(),
        reason: format!("unexpected response body: {e}"),
    }
}
