//! `bridge serve` and `bridge simulate`.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use lightbridge::api::{self, ApiOptions, ApiState};
use lightbridge::game::DEFAULT_ANSWER_HOLD;
use lightbridge::reconciler::{ReconcilerConfig, ReconcilerHandle};
use lightbridge::registry::{CodeGenerator, FileStore, MemoryStore, RecordStore, Registry, SeededDraws};
use lightbridge::vendor::{sim_router, Fixture, HttpVendorClient, SimConfig, Simulator, VendorLink};
use tokio::net::TcpListener;

use crate::client::CliError;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1", env = "BRIDGE_HOST")]
    pub host: String,
    /// Port to bind; 0 picks a free one.
    #[arg(long, default_value_t = 8080, env = "BRIDGE_PORT")]
    pub port: u16,
    /// Registry append log. In memory when omitted.
    #[arg(long, env = "BRIDGE_STORE")]
    pub store: Option<PathBuf>,
    /// Base URL of the vendor cloud.
    #[arg(long, default_value = "http://127.0.0.1:8081", env = "BRIDGE_VENDOR_URL")]
    pub vendor_url: String,
    #[arg(long, default_value_t = 250, env = "BRIDGE_POLL_INTERVAL_MS")]
    pub poll_interval_ms: u64,
    #[arg(long, default_value_t = 100, env = "BRIDGE_RETRY_BACKOFF_MS")]
    pub retry_backoff_ms: u64,
    /// Vendor calls per record per poll cycle.
    #[arg(long, default_value_t = 3, env = "BRIDGE_MAX_RETRIES")]
    pub max_retries: u32,
    #[arg(long, default_value_t = DEFAULT_ANSWER_HOLD.as_millis() as u64, env = "BRIDGE_ANSWER_HOLD_MS")]
    pub answer_hold_ms: u64,
    /// Freeze timestamps, number sessions sequentially, and let clients
    /// end the answer hold instead of a timer.
    #[arg(long, env = "BRIDGE_TEST_MODE")]
    pub test_mode: bool,
    /// Seed for pairing-code draws. Random when omitted.
    #[arg(long, env = "BRIDGE_CODE_SEED")]
    pub code_seed: Option<u64>,
    /// Append accepted session events here as JSON lines.
    #[arg(long, env = "BRIDGE_EVENT_LOG")]
    pub event_log: Option<PathBuf>,
    /// Serve a built web UI from this directory.
    #[arg(long = "static", env = "BRIDGE_STATIC")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "127.0.0.1", env = "SIM_HOST")]
    pub host: String,
    #[arg(long, default_value_t = 8081, env = "SIM_PORT")]
    pub port: u16,
    /// Fixture JSON. The built-in demo account when omitted.
    #[arg(long, env = "SIM_FIXTURE")]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 0, env = "SIM_FAULT_SEED")]
    pub fault_seed: u64,
    /// Latency for devices without their own.
    #[arg(long, default_value_t = 30, env = "SIM_LATENCY_MS")]
    pub latency_ms: u64,
}

async fn bind(host: &str, port: u16) -> Result<(TcpListener, SocketAddr), CliError> {
    let listener = TcpListener::bind((host, port))
        .await
        .map_err(|e| CliError::Startup(format!("cannot bind {host}:{port}: {e}")))?;
    let addr = listener.local_addr()?;
    // Scripts read the first stdout line to learn the port.
    println!("listening on {addr}");
    std::io::stdout().flush()?;
    Ok((listener, addr))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub async fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = ReconcilerConfig {
        poll_interval: Duration::from_millis(args.poll_interval_ms),
        retry_backoff: Duration::from_millis(args.retry_backoff_ms),
        max_retries_per_cycle: args.max_retries,
        ..ReconcilerConfig::default()
    };
    let config = ReconcilerConfig {
        backoff_cap: config.backoff_cap.max(config.retry_backoff),
        ..config
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid reconciler settings: {e}")))?;

    let store: Arc<dyn RecordStore> = match &args.store {
        Some(path) => Arc::new(
            FileStore::open(path)
                .map_err(|e| CliError::Startup(format!("cannot open store {}: {e}", path.display())))?,
        ),
        None => Arc::new(MemoryStore::new()),
    };
    let codes = match args.code_seed {
        Some(seed) => CodeGenerator::seeded(seed),
        None => CodeGenerator::new(SeededDraws::from_entropy()),
    };
    let registry = Arc::new(
        Registry::open(store, codes).map_err(|e| CliError::Startup(format!("cannot load registry: {e}")))?,
    );
    let cloud = HttpVendorClient::new(&args.vendor_url)
        .map_err(|e| CliError::Usage(format!("bad --vendor-url: {e}")))?;
    let link = Arc::new(VendorLink::new(Arc::new(cloud)));

    let mut options = if args.test_mode {
        ApiOptions::test_mode()
    } else {
        ApiOptions::default()
    };
    options.answer_hold = Duration::from_millis(args.answer_hold_ms);
    options.event_log = args.event_log.clone();
    let state = ApiState::new(registry.clone(), link.clone(), options)
        .map_err(|e| CliError::Startup(format!("cannot open event log: {e}")))?;

    let (listener, addr) = bind(&args.host, args.port).await?;
    let reconciler = ReconcilerHandle::spawn(registry, link, config)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    tracing::info!(%addr, vendor = %args.vendor_url, "bridge up");
    axum::serve(listener, api::router(state, args.static_dir))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    reconciler.shutdown().await;
    Ok(())
}

pub async fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let fixture = match &args.fixture {
        Some(path) => Fixture::load(path).map_err(CliError::Startup)?,
        None => Fixture::demo(),
    };
    let sim = Arc::new(Simulator::new(
        &fixture,
        SimConfig {
            fault_seed: args.fault_seed,
            latency: Duration::from_millis(args.latency_ms),
            ..SimConfig::default()
        },
    ));
    let (listener, addr) = bind(&args.host, args.port).await?;
    tracing::info!(%addr, accounts = fixture.accounts.len(), "simulator up");
    axum::serve(listener, sim_router(sim))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}
