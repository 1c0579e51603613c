//! Device registry: pairing-code issue, desired/reported bookkeeping and the
//! dirty-record query the reconciler polls.
//!
//! All mutations go through one lock and are persisted before they become
//! visible, so each operation is linearizable and readers never see a torn
//! record. A failed store write leaves the in-memory view untouched.

mod codes;
pub mod store;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use chrono::Utc;
use parking_lot::Mutex;
use thiserror::Error;

use crate::model::{AccountHandle, DeviceRecord, LightState, PairingCode, RecordStatus};

pub use codes::{
    CodeDraws, CodeGenerator, ScriptedDraws, SeededDraws, DEFAULT_MAX_ATTEMPTS,
};
pub use store::{FileStore, MemoryStore, RecordStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("vendor_device_id must not be empty")]
    EmptyDeviceId,
    #[error("unknown pairing code {0}")]
    UnknownCode(PairingCode),
    #[error("pairing code {0} has been revoked")]
    Revoked(PairingCode),
    #[error("no free pairing code after {attempts} attempts")]
    Exhausted { attempts: u32 },
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("revision {revision} for {code} is ahead of desired revision {desired}")]
    RevisionAhead {
        code: PairingCode,
        revision: u64,
        desired: u64,
    },
}

impl From<StoreError> for RegistryError {
    fn from(e: StoreError) -> Self {
        RegistryError::StoreUnavailable(e.to_string())
    }
}

pub struct Registry {
    store: Arc<dyn RecordStore>,
    inner: Mutex<Inner>,
}

struct Inner {
    records: HashMap<PairingCode, DeviceRecord>,
    active: HashSet<PairingCode>,
    codes: CodeGenerator,
}

impl Registry {
    /// Load every record from `store` and issue new codes from `codes`.
    pub fn open(store: Arc<dyn RecordStore>, codes: CodeGenerator) -> Result<Self, RegistryError> {
        let mut records = HashMap::new();
        let mut active = HashSet::new();
        for record in store.load_all()? {
            if record.is_active() {
                active.insert(record.code.clone());
            }
            records.insert(record.code.clone(), record);
        }
        Ok(Registry {
            store,
            inner: Mutex::new(Inner {
                records,
                active,
                codes,
            }),
        })
    }

    /// Volatile registry with entropy-seeded codes.
    pub fn in_memory() -> Self {
        Self::open(
            Arc::new(MemoryStore::new()),
            CodeGenerator::new(SeededDraws::from_entropy()),
        )
        .expect("memory store cannot fail to load")
    }

    pub fn register_device(
        &self,
        account: AccountHandle,
        vendor_device_id: &str,
        alias: &str,
        initial_reported: Option<LightState>,
    ) -> Result<DeviceRecord, RegistryError> {
        if vendor_device_id.is_empty() {
            return Err(RegistryError::EmptyDeviceId);
        }
        let mut inner = self.inner.lock();
        let Inner { active, codes, .. } = &mut *inner;
        let code = codes.generate_code(active)?;
        let record = DeviceRecord {
            code: code.clone(),
            vendor_device_id: vendor_device_id.to_owned(),
            vendor_account: account,
            alias: alias.to_owned(),
            // Registration must not move the light.
            desired: initial_reported.unwrap_or(LightState::OFF),
            desired_revision: 0,
            reported: initial_reported,
            reported_revision: 0,
            created_at: Utc::now(),
            last_reconciled_at: None,
            status: RecordStatus::Active,
        };
        self.store.put(&record)?;
        inner.active.insert(code.clone());
        inner.records.insert(code, record.clone());
        Ok(record)
    }

    /// Replace the desired state; returns the new desired revision. Every
    /// call bumps the revision, even if the state is unchanged.
    pub fn set_desired(&self, code: &PairingCode, state: LightState) -> Result<u64, RegistryError> {
        self.update_active(code, |record| {
            record.desired = state;
            record.desired_revision += 1;
            Ok(())
        })
        .map(|r| r.desired_revision)
    }

    /// Record that the vendor acknowledged `state` for desired revision
    /// `revision`. Confirmations older than the current reported revision
    /// are ignored.
    pub fn confirm_reported(
        &self,
        code: &PairingCode,
        revision: u64,
        state: LightState,
    ) -> Result<DeviceRecord, RegistryError> {
        self.update_active(code, |record| {
            if revision > record.desired_revision {
                return Err(RegistryError::RevisionAhead {
                    code: record.code.clone(),
                    revision,
                    desired: record.desired_revision,
                });
            }
            if revision >= record.reported_revision {
                record.reported = Some(state);
                record.reported_revision = revision;
            }
            record.last_reconciled_at = Some(Utc::now());
            Ok(())
        })
    }

    pub fn get_record(&self, code: &PairingCode) -> Result<DeviceRecord, RegistryError> {
        let inner = self.inner.lock();
        match inner.records.get(code) {
            Some(r) if r.is_active() => Ok(r.clone()),
            Some(_) => Err(RegistryError::Revoked(code.clone())),
            None => Err(RegistryError::UnknownCode(code.clone())),
        }
    }

    /// Mark the record revoked and release its code for reuse.
    pub fn revoke(&self, code: &PairingCode) -> Result<(), RegistryError> {
        self.update_active(code, |record| {
            record.status = RecordStatus::Revoked;
            Ok(())
        })?;
        self.inner.lock().active.remove(code);
        Ok(())
    }

    /// Active records whose desired revision has not been confirmed, ordered
    /// by code.
    pub fn list_dirty(&self) -> Vec<DeviceRecord> {
        let inner = self.inner.lock();
        let mut dirty: Vec<_> = inner
            .records
            .values()
            .filter(|r| r.is_active() && r.is_dirty())
            .cloned()
            .collect();
        dirty.sort_by(|a, b| a.code.cmp(&b.code));
        dirty
    }

    pub fn active_codes(&self) -> Vec<PairingCode> {
        let mut codes: Vec<_> = self.inner.lock().active.iter().cloned().collect();
        codes.sort();
        codes
    }

    pub fn active_count(&self) -> usize {
        self.inner.lock().active.len()
    }

    fn update_active(
        &self,
        code: &PairingCode,
        f: impl FnOnce(&mut DeviceRecord) -> Result<(), RegistryError>,
    ) -> Result<DeviceRecord, RegistryError> {
        let mut inner = self.inner.lock();
        let current = match inner.records.get(code) {
            Some(r) if r.is_active() => r,
            Some(_) => return Err(RegistryError::Revoked(code.clone())),
            None => return Err(RegistryError::UnknownCode(code.clone())),
        };
        let mut updated = current.clone();
        f(&mut updated)?;
        self.store.put(&updated)?;
        inner.records.insert(code.clone(), updated.clone());
        Ok(updated)
    }
}
