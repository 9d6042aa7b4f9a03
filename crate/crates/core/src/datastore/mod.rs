//! Single-writer, versioned key-value store with compare-and-swap.
//!
//! Every mutation goes through one write lock, is appended to the
//! write-ahead log and (with [`FlushPolicy::EveryWrite`]) synced before the
//! call returns. Reads share a read lock and never touch the disk. A data
//! directory may be opened by one process at a time; the `LOCK` file enforces
//! this.
//!
//! Versions start at 1 on the first write of a key and grow by exactly one
//! per successful write. An absent key, including one that was deleted,
//! reports version 0 for compare-and-swap purposes.

pub mod wal;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

use wal::{WalEntry, WalOp};

pub const WAL_FILE: &str = "wal.log";
pub const COMPACT_FILE: &str = "wal.compact";
pub const LOCK_FILE: &str = "LOCK";
pub const MAX_KEY_BYTES: usize = 512;

const BATCH_SYNC_EVERY: u32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("version conflict: current version is {current}")]
    Conflict { current: u64 },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("data directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("data directory {0} does not exist or is not a directory")]
    MissingDir(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlushPolicy {
    /// fsync after every acknowledged write.
    #[default]
    EveryWrite,
    /// Leave writes in the OS cache and sync periodically. Survives process
    /// crashes but not power loss.
    Batched,
}

impl std::str::FromStr for FlushPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always" | "every-write" | "fsync" => Ok(FlushPolicy::EveryWrite),
            "batched" => Ok(FlushPolicy::Batched),
            other => Err(format!("unknown flush policy {other:?}")),
        }
    }
}

impl FlushPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            FlushPolicy::EveryWrite => "always",
            FlushPolicy::Batched => "batched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub key: String,
    pub value: String,
    pub version: u64,
}

#[derive(Debug, Clone)]
struct Cell {
    value: String,
    version: u64,
}

struct State {
    map: BTreeMap<String, Cell>,
    wal: File,
    wal_len: u64,
    wal_entries: u64,
    unsynced: u32,
}

pub struct Store {
    dir: PathBuf,
    flush: FlushPolicy,
    state: RwLock<State>,
    _lock: File,
}

fn validate_key(key: &str) -> Result<(), StoreError> {
    if key.is_empty() {
        return Err(StoreError::InvalidKey("key must not be empty".into()));
    }
    if key.len() > MAX_KEY_BYTES {
        return Err(StoreError::InvalidKey(format!(
            "key is {} bytes, limit is {MAX_KEY_BYTES}",
            key.len()
        )));
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

fn apply(map: &mut BTreeMap<String, Cell>, entry: WalEntry) {
    match entry.op {
        WalOp::Put => {
            map.insert(
                entry.key,
                Cell {
                    value: entry.value.unwrap_or_default(),
                    version: entry.version,
                },
            );
        }
        WalOp::Delete => {
            map.remove(&entry.key);
        }
    }
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, FlushPolicy::EveryWrite)
    }

    /// Opens `dir`, replaying the committed prefix of its log. A torn tail is
    /// truncated away so later appends start on an entry boundary.
    pub fn open_with(dir: impl AsRef<Path>, flush: FlushPolicy) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(StoreError::MissingDir(dir));
        }
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(StoreError::Locked(dir)),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }

        // A compaction that never reached its rename is discarded.
        match fs::remove_file(dir.join(COMPACT_FILE)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }

        let wal_path = dir.join(WAL_FILE);
        let mut wal = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(&wal_path)?;
        let mut bytes = Vec::new();
        wal.read_to_end(&mut bytes)?;
        let (entries, committed) = wal::decode(&bytes);
        if committed < bytes.len() {
            wal.set_len(committed as u64)?;
            wal.sync_all()?;
        }
        sync_dir(&dir)?;

        let wal_entries = entries.len() as u64;
        let mut map = BTreeMap::new();
        for entry in entries {
            apply(&mut map, entry);
        }

        Ok(Self {
            dir,
            flush,
            state: RwLock::new(State {
                map,
                wal,
                wal_len: committed as u64,
                wal_entries,
                unsynced: 0,
            }),
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn flush_policy(&self) -> FlushPolicy {
        self.flush
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get(&self, key: &str) -> Option<(String, u64)> {
        self.read()
            .map
            .get(key)
            .map(|c| (c.value.clone(), c.version))
    }

    pub fn version(&self, key: &str) -> u64 {
        self.read().map.get(key).map_or(0, |c| c.version)
    }

    /// Writes `value` under `key`. With `expected` set, the write happens only
    /// if it equals the current version (0 for an absent key).
    pub fn put(&self, key: &str, value: &str, expected: Option<u64>) -> Result<u64, StoreError> {
        validate_key(key)?;
        let mut st = self.write();
        let current = st.map.get(key).map_or(0, |c| c.version);
        if let Some(expected) = expected {
            if expected != current {
                return Err(StoreError::Conflict { current });
            }
        }
        let version = current + 1;
        self.append(&mut st, &WalEntry::put(key, value, version))?;
        st.map.insert(
            key.to_string(),
            Cell {
                value: value.to_string(),
                version,
            },
        );
        Ok(version)
    }

    /// Removes `key`. Deleting an absent key succeeds without writing.
    pub fn delete(&self, key: &str, expected: Option<u64>) -> Result<(), StoreError> {
        validate_key(key)?;
        let mut st = self.write();
        let current = st.map.get(key).map_or(0, |c| c.version);
        if let Some(expected) = expected {
            if expected != current {
                return Err(StoreError::Conflict { current });
            }
        }
        if current == 0 {
            return Ok(());
        }
        self.append(&mut st, &WalEntry::delete(key, current))?;
        st.map.remove(key);
        Ok(())
    }

    /// Live records whose key starts with `prefix`, byte-wise ascending.
    pub fn scan(&self, prefix: &str) -> Vec<Record> {
        self.read()
            .map
            .range::<str, _>((std::ops::Bound::Included(prefix), std::ops::Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, c)| Record {
                key: k.clone(),
                value: c.value.clone(),
                version: c.version,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.read().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of entries currently in the log file.
    pub fn wal_entries(&self) -> u64 {
        self.read().wal_entries
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        let mut st = self.write();
        st.wal.sync_data()?;
        st.unsynced = 0;
        Ok(())
    }

    fn append(&self, st: &mut State, entry: &WalEntry) -> Result<(), StoreError> {
        let bytes = wal::encode(entry);
        if let Err(e) = st.wal.write_all(&bytes) {
            // Roll a torn append back so the log stays on an entry boundary.
            let _ = st.wal.set_len(st.wal_len);
            return Err(e.into());
        }
        st.wal_len += bytes.len() as u64;
        st.wal_entries += 1;
        match self.flush {
            FlushPolicy::EveryWrite => st.wal.sync_data()?,
            FlushPolicy::Batched => {
                st.unsynced += 1;
                if st.unsynced >= BATCH_SYNC_EVERY {
                    st.wal.sync_data()?;
                    st.unsynced = 0;
                }
            }
        }
        Ok(())
    }

    fn write_snapshot(&self, st: &State, path: &Path) -> Result<(u64, u64), StoreError> {
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(path)?;
        let mut buf = Vec::new();
        for (key, cell) in &st.map {
            buf.extend(wal::encode(&WalEntry::put(key, &cell.value, cell.version)));
        }
        file.write_all(&buf)?;
        file.sync_all()?;
        Ok((buf.len() as u64, st.map.len() as u64))
    }

    /// Rewrites the log so it holds exactly one entry per live key.
    ///
    /// The new log is written beside the old one and swapped in by rename; a
    /// failure at any point leaves the old log in place.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut st = self.write();
        let tmp = self.dir.join(COMPACT_FILE);
        let (len, entries) = match self.write_snapshot(&st, &tmp) {
            Ok(v) => v,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
        };
        let wal_path = self.dir.join(WAL_FILE);
        fs::rename(&tmp, &wal_path)?;
        sync_dir(&self.dir)?;
        st.wal = OpenOptions::new().read(true).append(true).open(&wal_path)?;
        st.wal_len = len;
        st.wal_entries = entries;
        st.unsynced = 0;
        Ok(())
    }

    /// Runs a compaction up to, but not including, the swap. Reopening the
    /// directory afterwards behaves as if the process died at that point.
    #[doc(hidden)]
    pub fn compact_without_swap(&self) -> Result<(), StoreError> {
        let st = self.write();
        self.write_snapshot(&st, &self.dir.join(COMPACT_FILE))?;
        Ok(())
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if let Ok(st) = self.state.get_mut() {
            let _ = st.wal.sync_data();
        }
    }
}
