//! Key-value persistence for device records.
//!
//! The file-backed store keeps two files with the same line schema, one
//! JSON-encoded [`DeviceRecord`] per line:
//!
//! * `<path>` is the append log. Every write appends the full record.
//! * `<path>.snapshot` holds one line per code as of the last compaction.
//!
//! Loading reads the snapshot and then replays the log; the last line for a
//! code wins. A truncated final log line (torn write) is skipped.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::Mutex;
use std::collections::BTreeMap;

use crate::model::{DeviceRecord, PairingCode};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt store at {path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Unavailable(e.to_string())
    }
}

pub trait RecordStore: Send + Sync {
    fn load_all(&self) -> Result<Vec<DeviceRecord>, StoreError>;

    /// Durably persist one record, replacing any earlier version for its code.
    fn put(&self, record: &DeviceRecord) -> Result<(), StoreError>;
}

/// Volatile store for tests and throwaway runs. Writes can be made to fail
/// to exercise `StoreUnavailable` paths.
#[derive(Default)]
pub struct MemoryStore {
    records: Mutex<BTreeMap<PairingCode, DeviceRecord>>,
    fail_writes: AtomicBool,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_fail_writes(&self, fail: bool) {
        self.fail_writes.store(fail, Ordering::SeqCst);
    }
}

impl RecordStore for MemoryStore {
    fn load_all(&self) -> Result<Vec<DeviceRecord>, StoreError> {
        Ok(self.records.lock().values().cloned().collect())
    }

    fn put(&self, record: &DeviceRecord) -> Result<(), StoreError> {
        if self.fail_writes.load(Ordering::SeqCst) {
            return Err(StoreError::Unavailable("injected write failure".into()));
        }
        self.records
            .lock()
            .insert(record.code.clone(), record.clone());
        Ok(())
    }
}

const DEFAULT_COMPACT_AFTER: usize = 4096;

pub struct FileStore {
    log_path: PathBuf,
    snapshot_path: PathBuf,
    inner: Mutex<FileInner>,
    compact_after: usize,
}

struct FileInner {
    log: BufWriter<File>,
    log_lines: usize,
    latest: BTreeMap<PairingCode, DeviceRecord>,
}

impl FileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with_compaction(path, DEFAULT_COMPACT_AFTER)
    }

    /// Open, compacting into the snapshot whenever the log grows past
    /// `compact_after` lines.
    pub fn open_with_compaction(
        path: impl AsRef<Path>,
        compact_after: usize,
    ) -> Result<Self, StoreError> {
        let log_path = path.as_ref().to_path_buf();
        let snapshot_path = snapshot_path_for(&log_path);
        let mut latest = BTreeMap::new();
        if snapshot_path.exists() {
            read_lines(&snapshot_path, false, &mut latest)?;
        }
        let log_lines = if log_path.exists() {
            read_lines(&log_path, true, &mut latest)?
        } else {
            0
        };
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        Ok(FileStore {
            log_path,
            snapshot_path,
            inner: Mutex::new(FileInner {
                log: BufWriter::new(log),
                log_lines,
                latest,
            }),
            compact_after: compact_after.max(1),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn snapshot_path(&self) -> &Path {
        &self.snapshot_path
    }

    /// Write every current record to the snapshot and truncate the log.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        self.compact_locked(&mut inner)
    }

    fn compact_locked(&self, inner: &mut FileInner) -> Result<(), StoreError> {
        let tmp = self.snapshot_path.with_extension("snapshot.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for record in inner.latest.values() {
                write_line(&mut out, record)?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &self.snapshot_path)?;
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&self.log_path)?;
        inner.log = BufWriter::new(log);
        inner.log_lines = 0;
        Ok(())
    }
}

impl RecordStore for FileStore {
    fn load_all(&self) -> Result<Vec<DeviceRecord>, StoreError> {
        Ok(self.inner.lock().latest.values().cloned().collect())
    }

    fn put(&self, record: &DeviceRecord) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        write_line(&mut inner.log, record)?;
        inner.log.flush()?;
        inner.log.get_ref().sync_data()?;
        inner.log_lines += 1;
        inner.latest.insert(record.code.clone(), record.clone());
        if inner.log_lines >= self.compact_after {
            self.compact_locked(&mut inner)?;
        }
        Ok(())
    }
}

pub fn snapshot_path_for(log_path: &Path) -> PathBuf {
    let mut name = log_path.as_os_str().to_owned();
    name.push(".snapshot");
    PathBuf::from(name)
}

fn write_line(out: &mut impl Write, record: &DeviceRecord) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(record).map_err(|e| StoreError::Unavailable(e.to_string()))?;
    line.push(b'\n');
    out.write_all(&line)?;
    Ok(())
}

fn read_lines(
    path: &Path,
    tolerate_torn_tail: bool,
    into: &mut BTreeMap<PairingCode, DeviceRecord>,
) -> Result<usize, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.len();
    let mut count = 0;
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DeviceRecord>(line) {
            Ok(record) => {
                into.insert(record.code.clone(), record);
                count += 1;
            }
            Err(_) if tolerate_torn_tail && idx + 1 == last => {
                tracing::warn!(path = %path.display(), line = idx + 1, "skipping torn log tail");
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(count)
}
