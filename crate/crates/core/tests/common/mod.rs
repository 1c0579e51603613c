#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use lightbridge::api::{self, ApiOptions, ApiState};
use lightbridge::reconciler::{ReconcilerConfig, ReconcilerHandle};
use lightbridge::registry::{CodeGenerator, MemoryStore, Registry};
use lightbridge::vendor::{
    sim_router, Fixture, HttpVendorClient, SimConfig, Simulator, VendorCloud, VendorLink,
};
use tokio::net::TcpListener;

pub async fn serve(router: axum::Router) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    addr
}

pub struct SimServer {
    pub sim: Arc<Simulator>,
    pub url: String,
}

pub async fn spawn_sim(fixture: &Fixture, config: SimConfig) -> SimServer {
    let sim = Arc::new(Simulator::new(fixture, config));
    let addr = serve(sim_router(sim.clone())).await;
    SimServer {
        sim,
        url: format!("http://{addr}"),
    }
}

pub struct Bridge {
    pub sim: Arc<Simulator>,
    pub registry: Arc<Registry>,
    pub link: Arc<VendorLink>,
    pub reconciler: ReconcilerHandle,
    pub url: String,
    pub http: reqwest::Client,
}

pub struct BridgeSetup {
    pub fixture: Fixture,
    pub sim: SimConfig,
    pub reconciler: ReconcilerConfig,
    pub api: ApiOptions,
    /// Talk to the simulator over HTTP rather than in-process.
    pub over_http: bool,
}

impl Default for BridgeSetup {
    fn default() -> Self {
        BridgeSetup {
            fixture: Fixture::demo(),
            sim: SimConfig::default(),
            reconciler: ReconcilerConfig {
                poll_interval: Duration::from_millis(100),
                ..ReconcilerConfig::default()
            },
            api: ApiOptions::test_mode(),
            over_http: true,
        }
    }
}

pub async fn spawn_bridge(setup: BridgeSetup) -> Bridge {
    let sim_server = spawn_sim(&setup.fixture, setup.sim).await;
    let cloud: Arc<dyn VendorCloud> = if setup.over_http {
        Arc::new(HttpVendorClient::new(&sim_server.url).unwrap())
    } else {
        sim_server.sim.clone()
    };
    let link = Arc::new(VendorLink::new(cloud));
    let registry = Arc::new(
        Registry::open(Arc::new(MemoryStore::new()), CodeGenerator::seeded(0)).unwrap(),
    );
    let state = ApiState::new(registry.clone(), link.clone(), setup.api).unwrap();
    let addr = serve(api::router(state, None)).await;
    let reconciler =
        ReconcilerHandle::spawn(registry.clone(), link.clone(), setup.reconciler).unwrap();
    Bridge {
        sim: sim_server.sim,
        registry,
        link,
        reconciler,
        url: format!("http://{addr}"),
        http: reqwest::Client::new(),
    }
}

impl Bridge {
    pub async fn call(
        &self,
        method: reqwest::Method,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> (u16, serde_json::Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.url));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        let json = if text.is_empty() {
            serde_json::Value::Null
        } else {
            serde_json::from_str(&text)
                .unwrap_or_else(|_| panic!("non-JSON body for {path}: {text:?}"))
        };
        (status, json)
    }

    pub async fn pair(&self, device: &str) -> String {
        let (status, body) = self
            .call(
                reqwest::Method::POST,
                "/api/pair",
                Some(serde_json::json!({
                    "vendor_username": "demo",
                    "vendor_password": "demo",
                    "vendor_device_id": device,
                })),
            )
            .await;
        assert_eq!(status, 200, "{body}");
        body["code"].as_str().unwrap().to_owned()
    }

    pub async fn device_state(&self, code: &str) -> serde_json::Value {
        let (status, body) = self
            .call(reqwest::Method::GET, &format!("/api/device/{code}/state"), None)
            .await;
        assert_eq!(status, 200, "{body}");
        body
    }

    pub async fn event(&self, session: &str, kind: &str) -> (u16, serde_json::Value) {
        let body = if kind == "GestureDetected" {
            serde_json::json!({"kind": kind, "gesture_id": "TPose"})
        } else {
            serde_json::json!({ "kind": kind })
        };
        self.call(
            reqwest::Method::POST,
            &format!("/api/session/{session}/event"),
            Some(body),
        )
        .await
    }
}
