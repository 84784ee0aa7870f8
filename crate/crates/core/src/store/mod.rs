//! Durable design sessions.

mod report;
mod session;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

pub use report::{export_report, ReportError, ReportFormat, ScenarioReport, SessionReport};
pub use session::{
    ComparisonRecord, DesignSession, DiscussionRecord, Iteration, NewIteration, EXISTING, SCHEMA_VERSION,
};

use crate::fsutil::{is_staging_file, write_atomic};
use crate::images::ImageStore;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("session {id} is corrupt: {reason}")]
    Corrupt { id: String, reason: String },
    #[error("session {session} references missing image {image}")]
    DanglingImage { session: String, image: String },
    #[error("invalid session: {0}")]
    Invalid(String),
    #[error("storage io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdStrategy {
    /// Random UUIDs.
    Random,
    /// `s1`, `s2`, ... skipping ids already on disk. Used for reproducible runs.
    Sequential,
}

pub fn validate_session_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
    if ok {
        Ok(())
    } else {
        Err(StoreError::Invalid(format!("session id {id:?} must be 1-64 characters of [A-Za-z0-9-]")))
    }
}

/// Sessions as JSON documents under `<data_dir>/sessions/`.
pub struct SessionStore {
    root: PathBuf,
    images: ImageStore,
    ids: IdStrategy,
    counter: AtomicU64,
    locks: Mutex<HashMap<String, Arc<AsyncMutex<()>>>>,
}

impl SessionStore {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let root = data_dir.into();
        Self {
            images: ImageStore::new(&root),
            root,
            ids: IdStrategy::Random,
            counter: AtomicU64::new(1),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_id_strategy(mut self, ids: IdStrategy) -> Self {
        self.ids = ids;
        self
    }

    pub fn data_dir(&self) -> &Path {
        &self.root
    }

    pub fn images(&self) -> &ImageStore {
        &self.images
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn transcript_path(&self, id: &str) -> PathBuf {
        self.root.join("transcripts").join(format!("{id}.jsonl"))
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.sessions_dir().join(format!("{id}.json"))
    }

    pub fn exists(&self, id: &str) -> bool {
        validate_session_id(id).is_ok() && self.path_of(id).is_file()
    }

    pub fn allocate_id(&self) -> String {
        match self.ids {
            IdStrategy::Random => uuid::Uuid::new_v4().to_string(),
            IdStrategy::Sequential => loop {
                let id = format!("s{}", self.counter.fetch_add(1, Ordering::SeqCst));
                if !self.path_of(&id).exists() {
                    break id;
                }
            },
        }
    }

    /// Exclusive access to one session for read-modify-write cycles within
    /// this process.
    pub async fn lock(&self, id: &str) -> OwnedMutexGuard<()> {
        let lock = self
            .locks
            .lock()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(AsyncMutex::new(())))
            .clone();
        lock.lock_owned().await
    }

    /// Writes the session atomically; the previous version stays intact if
    /// the write fails part-way.
    pub fn save(&self, session: &DesignSession) -> Result<(), StoreError> {
        validate_session_id(&session.id)?;
        session.check_integrity().map_err(StoreError::Invalid)?;
        for image in session.images() {
            if !self.images.contains(image) {
                return Err(StoreError::DanglingImage {
                    session: session.id.clone(),
                    image: image.id.clone(),
                });
            }
        }
        let json = serde_json::to_vec_pretty(session).map_err(|e| StoreError::Invalid(e.to_string()))?;
        write_atomic(&self.path_of(&session.id), &json)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<DesignSession, StoreError> {
        validate_session_id(id)?;
        let bytes = match fs::read(self.path_of(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.into())),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| StoreError::Corrupt {
            id: id.to_string(),
            reason,
        };
        let session: DesignSession = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if session.id != id {
            return Err(corrupt(format!("file holds session {}", session.id)));
        }
        session.check_integrity().map_err(corrupt)?;
        Ok(session)
    }

    /// Ids of all stored sessions, sorted. Staging files are ignored.
    pub fn list_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.sessions_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if is_staging_file(&path) {
                continue;
            }
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if validate_session_id(stem).is_ok() {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load_all(&self) -> Result<Vec<DesignSession>, StoreError> {
        self.list_ids()?.iter().map(|id| self.load(id)).collect()
    }
}
