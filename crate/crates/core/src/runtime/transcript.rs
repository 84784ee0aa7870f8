use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::backend::{
    AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, RequestKind,
};
use super::retry::FailureKind;
use crate::images::{ImageRef, ImageStore};
use crate::persona::PersonaId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryOutcome {
    Ok { response: String },
    /// The backend produced an image, stored under this id.
    Image { image_id: String },
    Failed { kind: FailureKind, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: RequestKind,
    pub persona: Option<PersonaId>,
    pub attempt: u32,
    pub fingerprint: String,
    pub prompt: String,
    pub images: Vec<String>,
    pub outcome: EntryOutcome,
}

impl TranscriptEntry {
    pub fn new(request: &BackendRequest, attempt: u32, outcome: EntryOutcome) -> Self {
        Self {
            kind: request.kind,
            persona: request.persona,
            attempt,
            fingerprint: request.fingerprint(),
            prompt: request.prompt.clone(),
            images: request.images.iter().map(|i| i.id.clone()).collect(),
            outcome,
        }
    }
}

/// Append-only log of every backend attempt. Cheap to clone; clones share
/// the same log.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, entry: TranscriptEntry) {
        self.entries.lock().push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends all entries as JSON lines to `path` and clears the log.
    pub fn flush_to(&self, path: &Path) -> io::Result<()> {
        let entries = std::mem::take(&mut *self.entries.lock());
        if entries.is_empty() {
            return Ok(());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = String::new();
        for e in &entries {
            out.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
            out.push('\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(out.as_bytes())?;
        file.sync_data()
    }
}

pub fn read_transcript(path: &Path) -> io::Result<Vec<TranscriptEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

/// Answers requests from a recorded transcript, keyed by request fingerprint.
pub struct ReplayBackend {
    responses: HashMap<String, EntryOutcome>,
    images: ImageStore,
}

impl ReplayBackend {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>, images: ImageStore) -> Self {
        let mut responses = HashMap::new();
        for e in entries {
            if !matches!(e.outcome, EntryOutcome::Failed { .. }) {
                responses.insert(e.fingerprint, e.outcome);
            }
        }
        Self { responses, images }
    }
}

#[async_trait]
impl AgentBackend for ReplayBackend {
    fn metadata(&self) -> BackendMetadata {
        BackendMetadata {
            name: "replay".into(),
            deterministic: true,
        }
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        let fingerprint = request.fingerprint();
        match self.responses.get(&fingerprint) {
            Some(EntryOutcome::Ok { response }) => Ok(BackendOutput::Text(response.clone())),
            Some(EntryOutcome::Image { image_id }) => {
                for ext in ["png", "jpg"] {
                    let probe = ImageRef {
                        id: image_id.clone(),
                        source: crate::images::ImageSource::Generated,
                        uri: format!("images/{image_id}.{ext}"),
                        width_px: 0,
                        height_px: 0,
                    };
                    if let Ok(bytes) = self.images.read(&probe) {
                        return Ok(BackendOutput::Image(bytes));
                    }
                }
                Err(BackendError::Unsupported(format!("recorded image {image_id} is missing")))
            }
            _ => Err(BackendError::Unsupported(format!(
                "no recorded response for request {fingerprint}"
            ))),
        }
    }
}
