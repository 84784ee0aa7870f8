//! Backends for exercising failure handling.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;

use super::backend::{AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, RequestKind};
use crate::persona::PersonaId;

type Key = (RequestKind, Option<PersonaId>);

/// Serves queued replies first, then defers to an inner backend. Also keeps
/// every request it saw.
pub struct ScriptedBackend {
    inner: Arc<dyn AgentBackend>,
    script: Mutex<HashMap<Key, VecDeque<Result<BackendOutput, BackendError>>>>,
    seen: Mutex<Vec<BackendRequest>>,
}

impl ScriptedBackend {
    pub fn new(inner: Arc<dyn AgentBackend>) -> Self {
        Self {
            inner,
            script: Mutex::new(HashMap::new()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn push(&self, kind: RequestKind, persona: Option<PersonaId>, reply: Result<BackendOutput, BackendError>) {
        self.script.lock().entry((kind, persona)).or_default().push_back(reply);
    }

    pub fn push_text(&self, kind: RequestKind, persona: Option<PersonaId>, text: &str) {
        self.push(kind, persona, Ok(BackendOutput::Text(text.to_string())));
    }

    pub fn requests(&self) -> Vec<BackendRequest> {
        self.seen.lock().clone()
    }

    pub fn calls(&self, kind: RequestKind, persona: Option<PersonaId>) -> usize {
        self.seen
            .lock()
            .iter()
            .filter(|r| r.kind == kind && r.persona == persona)
            .count()
    }
}

#[async_trait]
impl AgentBackend for ScriptedBackend {
    fn metadata(&self) -> BackendMetadata {
        let inner = self.inner.metadata();
        BackendMetadata {
            name: format!("scripted({})", inner.name),
            deterministic: inner.deterministic,
        }
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        self.seen.lock().push(request.clone());
        let queued = self
            .script
            .lock()
            .get_mut(&(request.kind, request.persona))
            .and_then(VecDeque::pop_front);
        match queued {
            Some(reply) => reply,
            None => self.inner.complete(request).await,
        }
    }
}
