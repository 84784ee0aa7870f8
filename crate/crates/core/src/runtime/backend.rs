use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignSpec;
use crate::geo::StreetContext;
use crate::images::ImageRef;
use crate::persona::{PersonaEvaluation, PersonaId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Evaluate,
    DeepAnalysis,
    Chat,
    Compare,
    Discuss,
    Summarize,
    RenderImage,
}

/// What the caller will validate the reply against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaTag {
    Evaluation,
    DriverObservations,
    DeepAnalysis,
    ChatText,
    Comparison,
    DiscussionReply,
    Summary,
    Image,
}

impl SchemaTag {
    pub fn is_json(self) -> bool {
        !matches!(self, SchemaTag::ChatText | SchemaTag::Image)
    }
}

/// Structured facts behind a prompt. Live backends only read the prompt and
/// images; the offline backend computes its replies from these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestHints {
    pub context: Option<StreetContext>,
    pub spec: Option<DesignSpec>,
    pub designs: Vec<(String, DesignSpec)>,
    pub question: Option<String>,
    pub evaluations: Vec<PersonaEvaluation>,
    pub driver_points: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid backend request: {0}")]
pub struct RequestError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRequest {
    pub kind: RequestKind,
    pub persona: Option<PersonaId>,
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub expects: SchemaTag,
    #[serde(skip)]
    pub hints: RequestHints,
}

impl BackendRequest {
    pub fn new(
        kind: RequestKind,
        expects: SchemaTag,
        persona: Option<PersonaId>,
        prompt: String,
        images: Vec<ImageRef>,
    ) -> Result<Self, RequestError> {
        match kind {
            RequestKind::RenderImage if images.len() != 1 => {
                return Err(RequestError(format!(
                    "render_image needs exactly one base image, got {}",
                    images.len()
                )))
            }
            RequestKind::Evaluate | RequestKind::Compare if images.is_empty() => {
                return Err(RequestError(format!("{kind:?} needs at least one image")))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            persona,
            prompt,
            images,
            expects,
            hints: RequestHints::default(),
        })
    }

    pub fn with_hints(mut self, hints: RequestHints) -> Self {
        self.hints = hints;
        self
    }

    /// Stable identity of the request as a live backend would see it.
    pub fn fingerprint(&self) -> String {
        let ids: Vec<&str> = self.images.iter().map(|i| i.id.as_str()).collect();
        crate::sha256_hex(format!(
            "{:?}\n{:?}\n{:?}\n{}\n{}",
            self.kind,
            self.expects,
            self.persona,
            ids.join(","),
            self.prompt
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendOutput {
    Text(String),
    Image(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend cannot serve this request: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendMetadata {
    pub name: String,
    pub deterministic: bool,
}

/// A model provider that turns prompts (plus images) into text or images.
/// Implementations must tolerate concurrent calls.
#[async_trait]
pub trait AgentBackend: Send + Sync {
    fn metadata(&self) -> BackendMetadata;
    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError>;
}
