//! Session workflows shared by the HTTP API and the command line.

use std::fs::OpenOptions;
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use streetpersona_core::analytics::{aggregate_corpus, preference_disagreement, CorpusStats};
use streetpersona_core::design::{compile_image_prompt, validate_design_spec, RawDesignSpec};
use streetpersona_core::geo::{
    Coordinates, FixtureGeo, GeoError, LiveGeo, OverpassClient, ResponseCache, SharedGeo, StreetViewClient,
    ViewParams, DEFAULT_RADIUS_M,
};
use streetpersona_core::persona::prompts::ChatGrounding;
use streetpersona_core::persona::{ChatChannel, ChatMessage, ChatRole, DeepAnalysisReport, PersonaCatalog, PersonaId};
use streetpersona_core::runtime::{
    AgentBackend, AgentRuntime, ChatReply, DesignCandidate, LiveBackend, LiveConfig, MockBackend, RetryPolicy,
    RuntimeError, Transcript,
};
use streetpersona_core::store::{
    export_report, ComparisonRecord, DesignSession, DiscussionRecord, IdStrategy, Iteration, NewIteration,
    ReportFormat, SessionStore, StoreError, EXISTING,
};
use thiserror::Error;

use crate::config::{BackendKind, GeoMode, ServiceConfig};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotFound(String),
    #[error("no street-level imagery: {0}")]
    NoImagery(String),
    #[error("model backend failed: {0}")]
    Backend(String),
    #[error("map or imagery provider failed: {0}")]
    Upstream(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("design creation timed out; see transcript {transcript_id}")]
    Timeout { transcript_id: String },
}

impl From<RuntimeError> for EngineError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Precondition(m) => EngineError::Validation(m),
            other => EngineError::Backend(other.to_string()),
        }
    }
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::Invalid(_) => EngineError::NotFound(e.to_string()),
            other => EngineError::Storage(other.to_string()),
        }
    }
}

impl From<GeoError> for EngineError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::Validation(m) => EngineError::Validation(m),
            GeoError::NotFound(m) => EngineError::NoImagery(m),
            GeoError::Io(_) | GeoError::Image(_) => EngineError::Storage(e.to_string()),
            other => EngineError::Upstream(other.to_string()),
        }
    }
}

fn storage(e: impl std::fmt::Display) -> EngineError {
    EngineError::Storage(e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub heading: Option<f64>,
    #[serde(default)]
    pub fov: Option<f64>,
    #[serde(default)]
    pub radius_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignCreated {
    pub session_id: String,
    pub iteration: Iteration,
    pub warnings: Vec<String>,
    pub transcript_id: String,
}

/// Orchestrates geo lookups, persona calls and persistence.
pub struct Engine {
    config: ServiceConfig,
    store: SessionStore,
    runtime: AgentRuntime,
    geo: SharedGeo,
}

impl Engine {
    /// Build the backend and geo provider the configuration names.
    pub fn from_config(config: ServiceConfig) -> Result<Self, EngineError> {
        let store = SessionStore::new(&config.data_dir);
        let backend: Arc<dyn AgentBackend> = match (&config.backend, &config.live) {
            (BackendKind::Live, Some(live)) => {
                let mut lc = LiveConfig::new(live.api_key.clone());
                lc.endpoint = live.endpoint.clone();
                lc.chat_model = live.chat_model.clone();
                lc.image_model = live.image_model.clone();
                Arc::new(LiveBackend::new(lc, store.images().clone()).map_err(|e| EngineError::Backend(e.to_string()))?)
            }
            (BackendKind::Live, None) => {
                return Err(EngineError::Validation("live backend without settings".into()))
            }
            (BackendKind::Mock, _) => Arc::new(MockBackend::new()),
        };
        let geo: SharedGeo = match config.geo {
            GeoMode::Fixture => Arc::new(FixtureGeo::new(store.images().clone())),
            GeoMode::Live => {
                let cache = ResponseCache::new(&config.data_dir);
                Arc::new(LiveGeo {
                    overpass: OverpassClient::new(config.overpass_url.clone(), cache.clone()),
                    street_view: StreetViewClient::new(
                        config.street_view_url.clone(),
                        config.sv_key.clone(),
                        cache,
                        store.images().clone(),
                    ),
                })
            }
        };
        Self::with_parts(config, backend, geo)
    }

    /// Build around an explicit backend and geo provider.
    pub fn with_parts(
        config: ServiceConfig,
        backend: Arc<dyn AgentBackend>,
        geo: SharedGeo,
    ) -> Result<Self, EngineError> {
        let ids = if backend.metadata().deterministic {
            IdStrategy::Sequential
        } else {
            IdStrategy::Random
        };
        let store = SessionStore::new(&config.data_dir).with_id_strategy(ids);
        let policy = RetryPolicy::with_max_attempts(config.max_attempts)
            .map_err(|e| EngineError::Validation(e.to_string()))?;
        let runtime = AgentRuntime::new(backend, Arc::new(PersonaCatalog::builtin()), store.images().clone())
            .with_policy(policy)
            .with_parallelism(config.parallelism_cap);
        Ok(Self {
            config,
            store,
            runtime,
            geo,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    /// Reserve `<session>-<n>` by creating its empty file.
    fn reserve_transcript(&self, session: &str) -> Result<String, EngineError> {
        let dir = self.store.data_dir().join("transcripts");
        std::fs::create_dir_all(&dir).map_err(storage)?;
        for n in 1.. {
            let id = format!("{session}-{n}");
            match OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(self.store.transcript_path(&id))
            {
                Ok(_) => return Ok(id),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(storage(e)),
            }
        }
        unreachable!("transcript ids exhausted")
    }

    fn flush(&self, transcript: &Transcript, id: &str) -> Result<(), EngineError> {
        transcript
            .flush_to(&self.store.transcript_path(id))
            .map_err(storage)
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<DesignSession, EngineError> {
        let coords = Coordinates::new(req.lat, req.lon)?;
        let defaults = ViewParams::default();
        let view = ViewParams {
            heading: req.heading.unwrap_or(defaults.heading),
            fov: req.fov.unwrap_or(defaults.fov),
            ..defaults
        };
        view.validate()?;
        let radius = req.radius_m.unwrap_or(DEFAULT_RADIUS_M);
        let context = self.geo.street_context(coords, radius).await?;
        let image = self.geo.street_image(coords, view).await?;

        let id = self.store.allocate_id();
        let _guard = self.store.lock(&id).await;
        let transcript_id = self.reserve_transcript(&id)?;
        let transcript = Transcript::new();
        let outcome = self.runtime.run_baseline_evaluation(&context, &image, &transcript).await;
        self.flush(&transcript, &transcript_id)?;
        let session = DesignSession::new(id, Utc::now(), context, image, outcome?.baseline);
        self.store.save(&session)?;
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<DesignSession, EngineError> {
        Ok(self.store.load(id)?)
    }

    /// Render and evaluate a design, bounded by the configured timeout.
    pub async fn create_design(&self, session_id: &str, raw: &RawDesignSpec) -> Result<DesignCreated, EngineError> {
        let validated = validate_design_spec(raw).map_err(|e| EngineError::Validation(e.to_string()))?;
        if !self.store.exists(session_id) {
            return Err(EngineError::NotFound(format!("session {session_id} not found")));
        }
        let transcript = Transcript::new();
        let mut transcript_id = None;
        let work = async {
            let _guard = self.store.lock(session_id).await;
            let mut session = self.store.load(session_id)?;
            let tid = self.reserve_transcript(session_id)?;
            transcript_id = Some(tid.clone());
            let prompt = compile_image_prompt(&validated.spec);
            let image = self
                .runtime
                .render_design_image(&session.base_image, &prompt, &transcript)
                .await?;
            let outcome = self
                .runtime
                .evaluate_design(&session.context, &validated.spec, &image, &transcript)
                .await?;
            let iteration = session
                .push_iteration(NewIteration {
                    spec: validated.spec.clone(),
                    requested_location: validated.spec.buffer_location().or(validated.dropped_location),
                    warnings: validated.warnings.clone(),
                    compiled_prompt_sha256: prompt.sha256(),
                    image,
                    evaluations: outcome.evaluations,
                })
                .map_err(EngineError::Validation)?
                .clone();
            self.store.save(&session)?;
            Ok::<_, EngineError>((iteration, tid))
        };
        let result = tokio::time::timeout(self.config.design_timeout, work).await;
        let flush_id = match &transcript_id {
            Some(id) => id.clone(),
            None => self.reserve_transcript(session_id)?,
        };
        self.flush(&transcript, &flush_id)?;
        match result {
            Err(_) => Err(EngineError::Timeout {
                transcript_id: flush_id,
            }),
            Ok(Err(e)) => Err(e),
            Ok(Ok((iteration, transcript_id))) => Ok(DesignCreated {
                session_id: session_id.to_string(),
                iteration,
                warnings: validated.warnings,
                transcript_id,
            }),
        }
    }

    pub async fn chat(&self, session_id: &str, persona: PersonaId, message: &str) -> Result<ChatReply, EngineError> {
        let _guard = self.store.lock(session_id).await;
        let mut session = self.store.load(session_id)?;
        let history: Vec<ChatMessage> = session
            .chat_history(persona)
            .iter()
            .filter(|m| m.channel == ChatChannel::Chat)
            .cloned()
            .collect();
        let grounding = ChatGrounding {
            coords: session.context.coords,
            context: &session.context,
            evaluation: session.baseline.evaluations.iter().find(|e| e.persona() == persona),
            driver_points: &session.baseline.driver_points,
            summary: &session.baseline.summary,
        };
        let tid = self.reserve_transcript(session_id)?;
        let transcript = Transcript::new();
        let reply = self
            .runtime
            .persona_chat(persona, &grounding, Some(&session.base_image), &history, message, &transcript)
            .await;
        self.flush(&transcript, &tid)?;
        let reply = reply?;
        let log = session.chats.entry(persona).or_default();
        log.push(message_of(persona, ChatRole::User, ChatChannel::Chat, message));
        log.push(message_of(persona, ChatRole::Persona, ChatChannel::Chat, &reply.text));
        self.store.save(&session)?;
        Ok(reply)
    }

    /// Deep analysis of one scenario; defaults to the latest design.
    pub async fn analysis(
        &self,
        session_id: &str,
        persona: PersonaId,
        design_id: Option<&str>,
        message: &str,
    ) -> Result<DeepAnalysisReport, EngineError> {
        let _guard = self.store.lock(session_id).await;
        let mut session = self.store.load(session_id)?;
        let scenario = design_id
            .map(str::to_string)
            .or_else(|| session.iterations.last().map(|it| it.design_id.clone()))
            .unwrap_or_else(|| EXISTING.to_string());
        let (description, image) = if scenario == EXISTING {
            ("Existing street with no changes".to_string(), session.base_image.clone())
        } else {
            let it = find_iteration(&session, &scenario)?;
            (it.spec.describe(), it.image.clone())
        };
        let history: Vec<ChatMessage> = session
            .chat_history(persona)
            .iter()
            .filter(|m| m.channel == ChatChannel::Analysis)
            .cloned()
            .collect();
        let tid = self.reserve_transcript(session_id)?;
        let transcript = Transcript::new();
        let report = self
            .runtime
            .deep_analysis(persona, &session.context, &description, &image, &history, message, &transcript)
            .await;
        self.flush(&transcript, &tid)?;
        let report = report?.value;
        let text = serde_json::to_string(&report).map_err(storage)?;
        let log = session.chats.entry(persona).or_default();
        log.push(message_of(persona, ChatRole::User, ChatChannel::Analysis, message));
        log.push(message_of(persona, ChatRole::Persona, ChatChannel::Analysis, &text));
        self.store.save(&session)?;
        Ok(report)
    }

    pub async fn compare(
        &self,
        session_id: &str,
        design_ids: &[String],
        message: &str,
    ) -> Result<ComparisonRecord, EngineError> {
        let _guard = self.store.lock(session_id).await;
        let mut session = self.store.load(session_id)?;
        let designs = candidates(&session, design_ids)?;
        let histories = session.chats.clone();
        let tid = self.reserve_transcript(session_id)?;
        let transcript = Transcript::new();
        let verdicts = self
            .runtime
            .compare_across(&PersonaId::ALL, &session.context, &designs, &histories, message, &transcript)
            .await;
        self.flush(&transcript, &tid)?;
        let verdicts = verdicts?;
        let partition = preference_disagreement(&verdicts).map_err(|e| EngineError::Backend(e.to_string()))?;
        let record = ComparisonRecord {
            design_ids: design_ids.to_vec(),
            message: message.to_string(),
            verdicts,
            partition,
        };
        session.comparisons.push(record.clone());
        self.store.save(&session)?;
        Ok(record)
    }

    pub async fn discussion(
        &self,
        session_id: &str,
        question: &str,
        design_ids: &[String],
    ) -> Result<DiscussionRecord, EngineError> {
        let _guard = self.store.lock(session_id).await;
        let mut session = self.store.load(session_id)?;
        let designs = candidates(&session, design_ids)?;
        let tid = self.reserve_transcript(session_id)?;
        let transcript = Transcript::new();
        let turns = self
            .runtime
            .run_discussion(question, &PersonaId::ALL, &session.context, &designs, &transcript)
            .await;
        self.flush(&transcript, &tid)?;
        let record = DiscussionRecord {
            question: question.to_string(),
            design_ids: design_ids.to_vec(),
            turns: turns?,
        };
        session.discussions.push(record.clone());
        self.store.save(&session)?;
        Ok(record)
    }

    pub fn report(&self, session_id: &str, format: &str) -> Result<(ReportFormat, String), EngineError> {
        let format: ReportFormat = format.parse().map_err(|e: streetpersona_core::store::ReportError| {
            EngineError::Validation(e.to_string())
        })?;
        let session = self.store.load(session_id)?;
        let body = export_report(&session, format, self.config.conflict_threshold)
            .map_err(|e| EngineError::Validation(e.to_string()))?;
        Ok((format, body))
    }

    pub fn stats(&self) -> Result<CorpusStats, EngineError> {
        Ok(aggregate_corpus(&self.store.load_all()?))
    }

    /// Bytes of a stored image by content id.
    pub fn image(&self, image_id: &str) -> Result<(Vec<u8>, &'static str), EngineError> {
        if image_id.len() != 64 || !image_id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(EngineError::NotFound(format!("image {image_id} not found")));
        }
        for (ext, mime) in [("png", "image/png"), ("jpg", "image/jpeg")] {
            let path = self.store.images().root().join("images").join(format!("{image_id}.{ext}"));
            if let Ok(bytes) = std::fs::read(path) {
                return Ok((bytes, mime));
            }
        }
        Err(EngineError::NotFound(format!("image {image_id} not found")))
    }
}

fn message_of(persona: PersonaId, role: ChatRole, channel: ChatChannel, text: &str) -> ChatMessage {
    ChatMessage {
        persona,
        role,
        channel,
        text: text.to_string(),
    }
}

fn find_iteration<'a>(session: &'a DesignSession, design_id: &str) -> Result<&'a Iteration, EngineError> {
    session
        .iteration(design_id)
        .ok_or_else(|| EngineError::NotFound(format!("design {design_id} not found in session {}", session.id)))
}

fn candidates(session: &DesignSession, design_ids: &[String]) -> Result<Vec<DesignCandidate>, EngineError> {
    design_ids
        .iter()
        .map(|id| {
            let it = find_iteration(session, id)?;
            Ok(DesignCandidate {
                id: id.clone(),
                spec: it.spec.clone(),
                image: it.image.clone(),
            })
        })
        .collect()
}
