use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dress_core::doc;
use dress_core::Timestamp;

use crate::backend::{Backend, FileBackend};

pub const MAGIC: &[u8; 8] = b"DRESSLG1";
const FRAME_HEADER: usize = 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("version conflict: current version is {current}")]
    VersionConflict { current: u64 },
    #[error("payload rejected: {0}")]
    PayloadInvalid(String),
    #[error("{kind} `{id}`{} not found", .version.map(|v| format!(" version {v}")).unwrap_or_default())]
    NotFound {
        kind: EntityKind,
        id: String,
        version: Option<u64>,
    },
    #[error("store is held by another writer ({0})")]
    Locked(String),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error("store file is corrupt: {0}")]
    Corrupt(String),
    #[error("storage i/o: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::VersionConflict { .. } => "VersionConflict",
            StoreError::PayloadInvalid(_) => "PayloadInvalid",
            StoreError::NotFound { .. } => "NotFound",
            StoreError::Locked(_) => "Locked",
            StoreError::ReadOnly => "ReadOnly",
            StoreError::Corrupt(_) => "Corrupt",
            StoreError::Io(_) => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Bank,
    Organization,
    UseCase,
    Scan,
    Register,
    PrincipleMap,
    Feedback,
    Meta,
}

impl EntityKind {
    pub const ALL: [EntityKind; 8] = [
        EntityKind::Bank,
        EntityKind::Organization,
        EntityKind::UseCase,
        EntityKind::Scan,
        EntityKind::Register,
        EntityKind::PrincipleMap,
        EntityKind::Feedback,
        EntityKind::Meta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Bank => "bank",
            EntityKind::Organization => "organization",
            EntityKind::UseCase => "use_case",
            EntityKind::Scan => "scan",
            EntityKind::Register => "register",
            EntityKind::PrincipleMap => "principle_map",
            EntityKind::Feedback => "feedback",
            EntityKind::Meta => "meta",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown entity kind `{s}`"))
    }
}

pub type Key = (EntityKind, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: EntityKind,
    pub id: String,
    pub version: u64,
    /// Canonical document, byte-exact as written.
    pub payload: String,
    pub written_at: Timestamp,
}

type Index = BTreeMap<Key, Vec<Arc<StoreRecord>>>;

/// Checks a payload before it is written; returns the rejection reason.
pub type Validator = Arc<dyn Fn(EntityKind, &str) -> Result<(), String> + Send + Sync>;
pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub struct StoreOptions {
    pub read_only: bool,
    pub validator: Option<Validator>,
    pub clock: Clock,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            read_only: false,
            validator: None,
            clock: Arc::new(chrono::Utc::now),
        }
    }
}

impl fmt::Debug for StoreOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StoreOptions")
            .field("read_only", &self.read_only)
            .field("validator", &self.validator.is_some())
            .finish_non_exhaustive()
    }
}

struct Writer {
    backend: Box<dyn Backend>,
    log_len: u64,
}

pub struct Store {
    writer: Mutex<Writer>,
    index: RwLock<Arc<Index>>,
    options: StoreOptions,
    recovered_bytes: u64,
    _lease: Option<Lease>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("keys", &self.index.read().len())
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

fn encode_frame(record: &StoreRecord) -> Vec<u8> {
    let body = doc::to_canonical(record).expect("records always serialize");
    // drop the document newline; the frame length delimits the body
    let body = body.trim_end_matches('\n').as_bytes();
    let mut out = Vec::with_capacity(FRAME_HEADER + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(body).to_le_bytes());
    out.extend_from_slice(body);
    out
}

/// Parse every intact frame. Returns the index and the length of the valid
/// prefix of `data`.
fn replay(data: &[u8]) -> Result<(Index, usize), StoreError> {
    if data.len() < MAGIC.len() {
        if MAGIC.starts_with(data) {
            return Ok((Index::new(), 0));
        }
        return Err(StoreError::Corrupt("bad magic".into()));
    }
    if &data[..MAGIC.len()] != MAGIC {
        return Err(StoreError::Corrupt("bad magic".into()));
    }
    let mut index = Index::new();
    let mut pos = MAGIC.len();
    while pos + FRAME_HEADER <= data.len() {
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(data[pos + 4..pos + 8].try_into().unwrap());
        let start = pos + FRAME_HEADER;
        let Some(body) = data.get(start..start + len) else { break };
        if crc32fast::hash(body) != crc {
            break;
        }
        let Ok(record) = serde_json::from_slice::<StoreRecord>(body) else { break };
        let key = (record.kind, record.id.clone());
        if record.version != index.get(&key).map_or(0, Vec::len) as u64 + 1 {
            break;
        }
        index.entry(key).or_default().push(Arc::new(record));
        pos = start + len;
    }
    Ok((index, pos))
}

impl Store {
    /// Open (creating if needed) the log file at `path`. A writable open
    /// takes the writer lease.
    pub fn open(path: impl AsRef<Path>, options: StoreOptions) -> Result<Store, StoreError> {
        let path = path.as_ref();
        let lease = if options.read_only {
            None
        } else {
            Some(Lease::acquire(path)?)
        };
        let backend = FileBackend::open(path, !options.read_only)?;
        let mut store = Store::with_backend(Box::new(backend), options)?;
        store._lease = lease;
        Ok(store)
    }

    pub fn with_backend(mut backend: Box<dyn Backend>, options: StoreOptions) -> Result<Store, StoreError> {
        let data = backend.load()?;
        let (index, valid) = replay(&data)?;
        let mut log_len = data.len() as u64;
        let mut recovered_bytes = 0;
        if !options.read_only {
            if valid < MAGIC.len() {
                if !data.is_empty() {
                    backend.truncate(0)?;
                }
                backend.append(MAGIC)?;
                log_len = MAGIC.len() as u64;
            } else if valid < data.len() {
                recovered_bytes = (data.len() - valid) as u64;
                backend.truncate(valid as u64)?;
                log_len = valid as u64;
            }
        }
        Ok(Store {
            writer: Mutex::new(Writer { backend, log_len }),
            index: RwLock::new(Arc::new(index)),
            options,
            recovered_bytes,
            _lease: None,
        })
    }

    /// Bytes of torn tail discarded when the store was opened.
    pub fn recovered_bytes(&self) -> u64 {
        self.recovered_bytes
    }

    pub fn now(&self) -> Timestamp {
        (self.options.clock)()
    }

    pub fn is_read_only(&self) -> bool {
        self.options.read_only
    }

    /// Append `payload` as version `expected_version + 1` of `(kind, id)`.
    pub fn put(&self, kind: EntityKind, id: &str, expected_version: u64, payload: &str) -> Result<u64, StoreError> {
        if self.options.read_only {
            return Err(StoreError::ReadOnly);
        }
        if id.is_empty() {
            return Err(StoreError::PayloadInvalid("empty id".into()));
        }
        if !doc::is_canonical_object(payload) {
            return Err(StoreError::PayloadInvalid("payload is not a canonical document".into()));
        }
        if let Some(v) = &self.options.validator {
            v(kind, payload).map_err(StoreError::PayloadInvalid)?;
        }
        let mut w = self.writer.lock();
        let key = (kind, id.to_string());
        let current = self.index.read().get(&key).map_or(0, |v| v.len() as u64);
        if current != expected_version {
            return Err(StoreError::VersionConflict { current });
        }
        let record = StoreRecord {
            kind,
            id: id.to_string(),
            version: current + 1,
            payload: payload.to_string(),
            written_at: self.now(),
        };
        let frame = encode_frame(&record);
        if let Err(e) = w.backend.append(&frame) {
            // Best effort: drop whatever part of the frame landed. If this
            // fails too, the CRC check discards it on the next open.
            let len = w.log_len;
            let _ = w.backend.truncate(len);
            return Err(StoreError::Io(e));
        }
        w.log_len += frame.len() as u64;
        let mut guard = self.index.write();
        Arc::make_mut(&mut guard).entry(key).or_default().push(Arc::new(record));
        Ok(current + 1)
    }

    /// Immutable view of everything committed so far, optionally limited
    /// to records written at or before `as_of`.
    pub fn snapshot(&self, as_of: Option<Timestamp>) -> Snapshot {
        Snapshot {
            index: Arc::clone(&self.index.read()),
            as_of,
        }
    }

    pub fn get(&self, kind: EntityKind, id: &str, version: Option<u64>) -> Result<Arc<StoreRecord>, StoreError> {
        self.snapshot(None).get(kind, id, version)
    }

    pub fn current_version(&self, kind: EntityKind, id: &str) -> u64 {
        self.snapshot(None).current_version(kind, id)
    }

    pub fn scan_keys(&self, kind: EntityKind) -> Vec<String> {
        self.snapshot(None).scan_keys(kind, |_| true)
    }
}

#[derive(Clone)]
pub struct Snapshot {
    index: Arc<Index>,
    as_of: Option<Timestamp>,
}

impl fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Snapshot")
            .field("keys", &self.index.len())
            .field("as_of", &self.as_of)
            .finish()
    }
}

impl Snapshot {
    pub fn as_of(&self) -> Option<Timestamp> {
        self.as_of
    }

    fn visible<'a>(&self, versions: &'a [Arc<StoreRecord>]) -> &'a [Arc<StoreRecord>] {
        match self.as_of {
            None => versions,
            Some(t) => {
                let n = versions.partition_point(|r| r.written_at <= t);
                &versions[..n]
            }
        }
    }

    pub fn history(&self, kind: EntityKind, id: &str) -> &[Arc<StoreRecord>] {
        self.index
            .get(&(kind, id.to_string()))
            .map_or(&[][..], |v| self.visible(v))
    }

    pub fn current_version(&self, kind: EntityKind, id: &str) -> u64 {
        self.history(kind, id).len() as u64
    }

    pub fn get(&self, kind: EntityKind, id: &str, version: Option<u64>) -> Result<Arc<StoreRecord>, StoreError> {
        let h = self.history(kind, id);
        let found = match version {
            None => h.last(),
            Some(v) => h.get((v as usize).wrapping_sub(1)),
        };
        found.cloned().ok_or_else(|| StoreError::NotFound {
            kind,
            id: id.to_string(),
            version,
        })
    }

    /// Ids of `kind` whose latest visible record passes `filter`, ascending.
    pub fn scan_keys(&self, kind: EntityKind, filter: impl Fn(&StoreRecord) -> bool) -> Vec<String> {
        self.index
            .range((kind, String::new())..)
            .take_while(|((k, _), _)| *k == kind)
            .filter_map(|((_, id), versions)| self.visible(versions).last().map(|r| (id, r)))
            .filter(|(_, r)| filter(r))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Every visible record, sorted by kind, id and version.
    pub fn all_records(&self) -> Vec<Arc<StoreRecord>> {
        self.index
            .values()
            .flat_map(|v| self.visible(v).iter().cloned())
            .collect()
    }

    /// Portable archive of every visible version as one canonical document.
    pub fn export_all(&self) -> String {
        let records: Vec<serde_json::Value> = self
            .all_records()
            .iter()
            .map(|r| {
                serde_json::json!({
                    "kind": r.kind,
                    "id": r.id,
                    "version": r.version,
                    "written_at": r.written_at,
                    "payload": serde_json::from_str::<serde_json::Value>(&r.payload)
                        .expect("stored payloads are valid documents"),
                })
            })
            .collect();
        doc::canonicalize(&serde_json::json!({"format": "dress-export/1", "records": records}))
    }
}

/// Exclusive writer lease: `<store>.lock` holding the owner's pid.
#[derive(Debug)]
pub struct Lease {
    path: PathBuf,
}

impl Lease {
    pub fn lock_path(store: &Path) -> PathBuf {
        let mut name = store.as_os_str().to_owned();
        name.push(".lock");
        PathBuf::from(name)
    }

    pub fn acquire(store: &Path) -> Result<Lease, StoreError> {
        let path = Self::lock_path(store);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id())?;
                    return Ok(Lease { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    if holder_alive(holder.trim()) {
                        return Err(StoreError::Locked(format!("pid {}", holder.trim())));
                    }
                    // stale lease from a process that is gone
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(StoreError::Locked(path.display().to_string()))
    }
}

fn holder_alive(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else {
        // unreadable lock content: assume a live writer rather than steal it
        return true;
    };
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

impl Drop for Lease {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
