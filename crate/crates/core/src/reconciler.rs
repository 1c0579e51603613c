//! Periodic reconciliation of desired light state into the vendor cloud.
//!
//! Every poll interval the loop asks the registry for dirty records and
//! pushes each one's desired state. A record is confirmed only for the
//! desired revision read at the start of its attempt, so a write that lands
//! mid-push keeps the record dirty for the next cycle (last writer wins).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::model::{DeviceRecord, PairingCode};
use crate::registry::{Registry, RegistryError};
use crate::vendor::{VendorError, VendorLink};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcilerConfig {
    pub poll_interval: Duration,
    /// Delay before the second attempt within a cycle.
    pub retry_backoff: Duration,
    pub backoff_multiplier: f64,
    pub backoff_cap: Duration,
    /// Vendor calls allowed per record per cycle.
    pub max_retries_per_cycle: u32,
    /// Records reconciled concurrently within one cycle.
    pub max_parallel_records: usize,
}

impl Default for ReconcilerConfig {
    fn default() -> Self {
        ReconcilerConfig {
            poll_interval: Duration::from_millis(250),
            retry_backoff: Duration::from_millis(100),
            backoff_multiplier: 2.0,
            backoff_cap: Duration::from_millis(5000),
            max_retries_per_cycle: 3,
            max_parallel_records: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("poll interval must be positive")]
    ZeroPollInterval,
    #[error("backoff cap {cap:?} is below the initial backoff {initial:?}")]
    CapBelowInitial { initial: Duration, cap: Duration },
    #[error("backoff multiplier must be at least 1")]
    ShrinkingBackoff,
    #[error("at least one attempt per cycle is required")]
    NoAttempts,
    #[error("at least one record must be reconciled at a time")]
    NoParallelism,
}

impl ReconcilerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.poll_interval.is_zero() {
            return Err(ConfigError::ZeroPollInterval);
        }
        if self.backoff_cap < self.retry_backoff {
            return Err(ConfigError::CapBelowInitial {
                initial: self.retry_backoff,
                cap: self.backoff_cap,
            });
        }
        // NaN fails this too
        if self.backoff_multiplier.partial_cmp(&1.0).is_none_or(|o| o.is_lt()) {
            return Err(ConfigError::ShrinkingBackoff);
        }
        if self.max_retries_per_cycle == 0 {
            return Err(ConfigError::NoAttempts);
        }
        if self.max_parallel_records == 0 {
            return Err(ConfigError::NoParallelism);
        }
        Ok(())
    }

    /// Sleeps between consecutive attempts: initial, then multiplied each
    /// time, never above the cap.
    pub fn backoff_delays(&self) -> impl Iterator<Item = Duration> + '_ {
        std::iter::successors(Some(self.retry_backoff), move |prev| {
            Some(prev.mul_f64(self.backoff_multiplier).min(self.backoff_cap))
        })
        .map(move |d| d.min(self.backoff_cap))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Nothing to push; no vendor call was made.
    NoOp,
    Converged { revision: u64, attempts: u32 },
    Failed { error: VendorError, attempts: u32 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::NoOp => "noop",
            Outcome::Converged { .. } => "converged",
            Outcome::Failed { .. } => "failed",
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            Outcome::NoOp => 0,
            Outcome::Converged { attempts, .. } | Outcome::Failed { attempts, .. } => *attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconcileError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Push one record's desired state, retrying within the cycle.
///
/// The record is re-read from the registry first; only its current desired
/// revision is confirmed on success. On failure the record is untouched.
pub async fn reconcile_once(
    registry: &Registry,
    link: &VendorLink,
    record: &DeviceRecord,
    config: &ReconcilerConfig,
) -> Result<Outcome, ReconcileError> {
    let current = registry.get_record(&record.code)?;
    if current.desired_revision == current.reported_revision {
        return Ok(Outcome::NoOp);
    }
    let target = current.desired_revision;
    let state = current.desired;

    let mut delays = config.backoff_delays();
    let mut attempts = 0;
    loop {
        attempts += 1;
        match link
            .set_state(&current.vendor_account, &current.vendor_device_id, state)
            .await
        {
            Ok(()) => {
                registry.confirm_reported(&current.code, target, state)?;
                return Ok(Outcome::Converged {
                    revision: target,
                    attempts,
                });
            }
            Err(error) if !error.is_retryable() || attempts >= config.max_retries_per_cycle => {
                return Ok(Outcome::Failed { error, attempts });
            }
            Err(_) => {
                let delay = delays.next().unwrap_or(config.backoff_cap);
                tokio::time::sleep(delay).await;
            }
        }
    }
}

/// Counters published by a running loop.
#[derive(Debug, Default)]
pub struct LoopStats {
    converged: AtomicU64,
    failed: AtomicU64,
    errors: AtomicU64,
    vendor_attempts: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoopStatsSnapshot {
    pub cycles: u64,
    pub converged: u64,
    pub failed: u64,
    pub errors: u64,
    pub vendor_attempts: u64,
}

/// Run cycles until `shutdown` turns true. A cycle already in progress
/// finishes the records it started; no new record is started once shutdown
/// is observed.
pub async fn run_loop(
    registry: Arc<Registry>,
    link: Arc<VendorLink>,
    config: ReconcilerConfig,
    mut shutdown: watch::Receiver<bool>,
    cycles: watch::Sender<u64>,
    stats: Arc<LoopStats>,
) {
    let mut ticker = tokio::time::interval(config.poll_interval);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        if *shutdown.borrow() {
            break;
        }
        tokio::select! {
            _ = ticker.tick() => {}
            changed = shutdown.changed() => {
                // A dropped sender means nobody can stop us any more; stop now.
                if changed.is_err() {
                    break;
                }
                continue;
            }
        }
        run_cycle(&registry, &link, &config, &shutdown, &stats).await;
        cycles.send_modify(|n| *n += 1);
    }
    tracing::debug!("reconciler stopped");
}

async fn run_cycle(
    registry: &Registry,
    link: &VendorLink,
    config: &ReconcilerConfig,
    shutdown: &watch::Receiver<bool>,
    stats: &LoopStats,
) {
    let dirty = registry.list_dirty();
    if dirty.is_empty() {
        return;
    }
    stream::iter(dirty)
        .take_while(|_| futures::future::ready(!*shutdown.borrow()))
        .map(|record| async move {
            let started = Instant::now();
            let result = reconcile_once(registry, link, &record, config).await;
            (record, result, started.elapsed())
        })
        .buffer_unordered(config.max_parallel_records)
        .for_each(|(record, result, elapsed)| {
            log_outcome(&record.code, record.desired_revision, &result, elapsed, stats);
            futures::future::ready(())
        })
        .await;
}

fn log_outcome(
    code: &PairingCode,
    listed_revision: u64,
    result: &Result<Outcome, ReconcileError>,
    elapsed: Duration,
    stats: &LoopStats,
) {
    let elapsed_ms = elapsed.as_millis() as u64;
    match result {
        Ok(outcome) => {
            stats
                .vendor_attempts
                .fetch_add(outcome.attempts().into(), Ordering::Relaxed);
            let revision = match outcome {
                Outcome::Converged { revision, .. } => *revision,
                _ => listed_revision,
            };
            match outcome {
                Outcome::Converged { .. } => {
                    stats.converged.fetch_add(1, Ordering::Relaxed);
                }
                Outcome::Failed { .. } => {
                    stats.failed.fetch_add(1, Ordering::Relaxed);
                }
                Outcome::NoOp => {}
            }
            let error = match outcome {
                Outcome::Failed { error, .. } => error.code(),
                _ => "",
            };
            tracing::info!(
                code = %code,
                revision,
                outcome = outcome.label(),
                attempts = outcome.attempts(),
                elapsed_ms,
                error,
                "reconcile"
            );
        }
        Err(e) => {
            stats.errors.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(
                code = %code,
                revision = listed_revision,
                outcome = "error",
                attempts = 0u32,
                elapsed_ms,
                error = %e,
                "reconcile"
            );
        }
    }
}

/// A reconciler loop running on the tokio runtime.
pub struct ReconcilerHandle {
    shutdown: watch::Sender<bool>,
    cycles: watch::Receiver<u64>,
    stats: Arc<LoopStats>,
    task: JoinHandle<()>,
}

impl ReconcilerHandle {
    pub fn spawn(
        registry: Arc<Registry>,
        link: Arc<VendorLink>,
        config: ReconcilerConfig,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let (shutdown_tx, shutdown_rx) = watch::channel(false);
        let (cycles_tx, cycles_rx) = watch::channel(0);
        let stats = Arc::new(LoopStats::default());
        let task = tokio::spawn(run_loop(
            registry,
            link,
            config,
            shutdown_rx,
            cycles_tx,
            stats.clone(),
        ));
        Ok(ReconcilerHandle {
            shutdown: shutdown_tx,
            cycles: cycles_rx,
            stats,
            task,
        })
    }

    /// Completed cycles so far.
    pub fn cycles(&self) -> u64 {
        *self.cycles.borrow()
    }

    /// Wait until at least `n` cycles have completed.
    pub async fn wait_for_cycles(&self, n: u64) {
        let mut rx = self.cycles.clone();
        // The sender lives as long as the loop; if it is gone there is
        // nothing left to wait for.
        let _ = rx.wait_for(|c| *c >= n).await;
    }

    pub fn stats(&self) -> LoopStatsSnapshot {
        LoopStatsSnapshot {
            cycles: self.cycles(),
            converged: self.stats.converged.load(Ordering::Relaxed),
            failed: self.stats.failed.load(Ordering::Relaxed),
            errors: self.stats.errors.load(Ordering::Relaxed),
            vendor_attempts: self.stats.vendor_attempts.load(Ordering::Relaxed),
        }
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.task.await;
    }
}
