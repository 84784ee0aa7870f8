//! Persona agent orchestration over a pluggable model backend.

mod backend;
mod live;
mod mock;
mod relevance;
mod retry;
pub mod testing;
mod transcript;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use backend::{
    AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, RequestError,
    RequestHints, RequestKind, SchemaTag,
};
pub use live::{LiveBackend, LiveConfig, DEFAULT_CHAT_MODEL, DEFAULT_ENDPOINT, DEFAULT_IMAGE_MODEL};
pub use mock::{mock_driver_total, mock_scores, MockBackend, MOCK_IMAGE_SIZE};
pub use relevance::{jaccard, keyword_relevance, tokenize};
pub use retry::{CallError, FailureKind, InvalidPolicy, RetryPolicy};
pub use transcript::{read_transcript, EntryOutcome, ReplayBackend, Transcript, TranscriptEntry};

use crate::design::{CompiledPrompt, DesignSpec};
use crate::geo::StreetContext;
use crate::images::{ImageRef, ImageSource, ImageStore};
use crate::persona::prompts::{
    render_chat_prompt, render_comparison_prompt, render_deep_analysis_prompt,
    render_discussion_prompt, render_summary_prompt, ChatGrounding, DesignOption,
};
use crate::persona::{
    count_words, render_evaluation_prompt, validate_comparison, validate_deep_analysis,
    validate_discussion_reply, validate_driver_observations, validate_evaluation, validate_summary,
    ChatMessage, ComparisonVerdict, DeepAnalysisReport, DriverCyclistSummary, PersonaCatalog,
    PersonaEvaluation, PersonaId, ValidationError,
};

pub const DEFAULT_PARALLELISM: usize = 5;
/// Chat replies longer than this many words carry a warning.
pub const CHAT_WORD_GUIDELINE: usize = 150;

/// Baseline assessment of the unmodified street.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub evaluations: Vec<PersonaEvaluation>,
    pub driver_points: Vec<String>,
    pub summary: DriverCyclistSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub baseline: Baseline,
    /// Backend attempts per persona; the driver entry counts its observation call.
    pub attempts: BTreeMap<PersonaId, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutcome {
    pub evaluations: Vec<PersonaEvaluation>,
    pub attempts: BTreeMap<PersonaId, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub persona: PersonaId,
    pub text: String,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionTurn {
    pub persona: PersonaId,
    pub relevance: f64,
    pub reply: String,
}

/// A rendered design offered for comparison or discussion.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCandidate {
    pub id: String,
    pub spec: DesignSpec,
    pub image: ImageRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonaFailure {
    pub persona: PersonaId,
    pub error: CallError,
}

fn describe_failures(failures: &[PersonaFailure]) -> String {
    let mut out = String::from("persona calls failed:");
    for f in failures {
        let _ = write!(out, " {} ({});", f.persona, f.error);
    }
    out.pop();
    out
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{}", describe_failures(.0))]
    PersonaFailures(Vec<PersonaFailure>),
    #[error("summary call failed: {0}")]
    Summary(CallError),
    #[error("image render failed (prompt sha256 {prompt_sha256}): {error}")]
    Render { prompt_sha256: String, error: CallError },
}

impl RuntimeError {
    pub fn failed_personas(&self) -> Vec<PersonaId> {
        match self {
            RuntimeError::PersonaFailures(f) => f.iter().map(|f| f.persona).collect(),
            _ => Vec::new(),
        }
    }
}

type Rejection = (FailureKind, String);

fn rejection(err: ValidationError) -> Rejection {
    match err {
        ValidationError::Parse { .. } => (FailureKind::Parse, err.to_string()),
        _ => (FailureKind::Schema, err.to_string()),
    }
}

fn text_of(out: &BackendOutput) -> Result<&str, Rejection> {
    match out {
        BackendOutput::Text(t) => Ok(t),
        BackendOutput::Image(_) => Err((FailureKind::Output, "expected text, got an image".into())),
    }
}

fn expect_persona(expected: PersonaId, got: PersonaId) -> Result<(), Rejection> {
    if expected == got {
        Ok(())
    } else {
        Err((
            FailureKind::Schema,
            format!("persona mismatch: expected {expected}, got {got}"),
        ))
    }
}

fn check_history(persona: PersonaId, history: &[ChatMessage]) -> Result<(), RuntimeError> {
    match history.iter().find(|m| m.persona != persona) {
        Some(m) => Err(RuntimeError::Precondition(format!(
            "history for {persona} contains messages from {}",
            m.persona
        ))),
        None => Ok(()),
    }
}

fn check_candidates(designs: &[DesignCandidate], min: usize) -> Result<(), RuntimeError> {
    if designs.len() < min {
        return Err(RuntimeError::Precondition(format!(
            "at least {min} designs required, got {}",
            designs.len()
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = designs.iter().find(|d| !seen.insert(d.id.as_str())) {
        return Err(RuntimeError::Precondition(format!("design {} listed twice", dup.id)));
    }
    Ok(())
}

fn request(
    kind: RequestKind,
    expects: SchemaTag,
    persona: Option<PersonaId>,
    prompt: String,
    images: Vec<ImageRef>,
) -> Result<BackendRequest, RuntimeError> {
    BackendRequest::new(kind, expects, persona, prompt, images)
        .map_err(|e| RuntimeError::Precondition(e.0))
}

fn collect<T>(results: Vec<(PersonaId, Result<Attempted<T>, CallError>)>) -> Result<(Vec<T>, BTreeMap<PersonaId, u32>), RuntimeError> {
    let mut values = Vec::new();
    let mut attempts = BTreeMap::new();
    let mut failures = Vec::new();
    for (persona, result) in results {
        match result {
            Ok(a) => {
                attempts.insert(persona, a.attempts);
                values.push(a.value);
            }
            Err(error) => failures.push(PersonaFailure { persona, error }),
        }
    }
    if failures.is_empty() {
        Ok((values, attempts))
    } else {
        Err(RuntimeError::PersonaFailures(failures))
    }
}

/// Sorts by relevance (highest first); ties keep canonical persona order.
pub fn order_turns(turns: &mut [DiscussionTurn]) {
    turns.sort_by(|a, b| {
        b.relevance
            .total_cmp(&a.relevance)
            .then(a.persona.cmp(&b.persona))
    });
}

/// Runs persona calls against a backend with validation, retries, a
/// concurrency cap, and transcript logging.
#[derive(Clone)]
pub struct AgentRuntime {
    backend: Arc<dyn AgentBackend>,
    catalog: Arc<PersonaCatalog>,
    images: ImageStore,
    policy: RetryPolicy,
    limiter: Arc<Semaphore>,
}

impl AgentRuntime {
    pub fn new(backend: Arc<dyn AgentBackend>, catalog: Arc<PersonaCatalog>, images: ImageStore) -> Self {
        Self {
            backend,
            catalog,
            images,
            policy: RetryPolicy::default(),
            limiter: Arc::new(Semaphore::new(DEFAULT_PARALLELISM)),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Caps concurrent backend calls; zero is treated as one.
    pub fn with_parallelism(mut self, cap: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(cap.max(1)));
        self
    }

    pub fn catalog(&self) -> &PersonaCatalog {
        &self.catalog
    }

    pub fn images(&self) -> &ImageStore {
        &self.images
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn backend_metadata(&self) -> BackendMetadata {
        self.backend.metadata()
    }

    async fn call<T>(
        &self,
        request: &BackendRequest,
        transcript: &Transcript,
        validate: impl Fn(&BackendOutput) -> Result<T, Rejection>,
    ) -> Result<Attempted<T>, CallError> {
        let _permit = self.limiter.acquire().await.expect("limiter is never closed");
        let max = self.policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            let result = match self.backend.complete(request).await {
                Ok(out) => validate(&out).map(|v| (v, out)).map_err(|(k, m)| (k, m, None)),
                Err(BackendError::Transport { status, message }) => Err((FailureKind::Transport, message, status)),
                Err(BackendError::Timeout(m)) => Err((FailureKind::Transport, format!("timeout: {m}"), None)),
                Err(BackendError::Unsupported(m)) => Err((FailureKind::Unsupported, m, None)),
            };
            match result {
                Ok((value, out)) => {
                    let outcome = match out {
                        BackendOutput::Text(response) => EntryOutcome::Ok { response },
                        BackendOutput::Image(bytes) => EntryOutcome::Image {
                            image_id: crate::sha256_hex(&bytes),
                        },
                    };
                    transcript.record(TranscriptEntry::new(request, attempt, outcome));
                    return Ok(Attempted { value, attempts: attempt });
                }
                Err((kind, message, status)) => {
                    tracing::debug!(?request.kind, ?request.persona, attempt, %message, "backend attempt failed");
                    transcript.record(TranscriptEntry::new(
                        request,
                        attempt,
                        EntryOutcome::Failed {
                            kind,
                            message: message.clone(),
                        },
                    ));
                    if attempt >= max || !self.policy.retries(kind) {
                        return Err(CallError {
                            kind,
                            message,
                            attempts: attempt,
                            status,
                        });
                    }
                    attempt += 1;
                    if kind == FailureKind::Transport {
                        tokio::time::sleep(self.policy.backoff(attempt)).await;
                    }
                }
            }
        }
    }

    async fn evaluate_one(
        &self,
        persona: PersonaId,
        context: &StreetContext,
        spec: Option<&DesignSpec>,
        image: &ImageRef,
        transcript: &Transcript,
    ) -> Result<Attempted<PersonaEvaluation>, CallError> {
        let prompt = render_evaluation_prompt(self.catalog.get(persona), context, spec);
        let req = BackendRequest::new(
            RequestKind::Evaluate,
            SchemaTag::Evaluation,
            Some(persona),
            prompt,
            vec![image.clone()],
        )
        .expect("one image attached")
        .with_hints(RequestHints {
            context: Some(context.clone()),
            spec: spec.cloned(),
            ..RequestHints::default()
        });
        self.call(&req, transcript, |out| {
            let eval = validate_evaluation(text_of(out)?).map_err(rejection)?;
            expect_persona(persona, eval.persona())?;
            Ok(eval)
        })
        .await
    }

    async fn driver_observations(
        &self,
        context: &StreetContext,
        image: &ImageRef,
        transcript: &Transcript,
    ) -> Result<Attempted<Vec<String>>, CallError> {
        let prompt = render_evaluation_prompt(self.catalog.get(PersonaId::Driver), context, None);
        let req = BackendRequest::new(
            RequestKind::Evaluate,
            SchemaTag::DriverObservations,
            Some(PersonaId::Driver),
            prompt,
            vec![image.clone()],
        )
        .expect("one image attached")
        .with_hints(RequestHints {
            context: Some(context.clone()),
            ..RequestHints::default()
        });
        self.call(&req, transcript, |out| {
            validate_driver_observations(text_of(out)?)
                .map(|d| d.points().to_vec())
                .map_err(rejection)
        })
        .await
    }

    fn require_image(&self, image: &ImageRef) -> Result<(), RuntimeError> {
        if self.images.contains(image) {
            Ok(())
        } else {
            Err(RuntimeError::Precondition(format!("image {} is not in the store", image.id)))
        }
    }

    /// Evaluates the unmodified street with all personas, then summarizes
    /// the driver and cyclist views.
    pub async fn run_baseline_evaluation(
        &self,
        context: &StreetContext,
        image: &ImageRef,
        transcript: &Transcript,
    ) -> Result<BaselineOutcome, RuntimeError> {
        self.require_image(image)?;
        let cyclists = join_all(PersonaId::CYCLISTS.into_iter().map(|p| async move {
            (p, self.evaluate_one(p, context, None, image, transcript).await)
        }));
        let driver = self.driver_observations(context, image, transcript);
        let (cyclists, driver) = futures::join!(cyclists, driver);

        let mut failures = Vec::new();
        let (evaluations, mut attempts) = match collect(cyclists) {
            Ok(ok) => ok,
            Err(RuntimeError::PersonaFailures(f)) => {
                failures = f;
                (Vec::new(), BTreeMap::new())
            }
            Err(other) => return Err(other),
        };
        let driver_points = match driver {
            Ok(a) => {
                attempts.insert(PersonaId::Driver, a.attempts);
                a.value
            }
            Err(error) => {
                failures.push(PersonaFailure {
                    persona: PersonaId::Driver,
                    error,
                });
                Vec::new()
            }
        };
        if !failures.is_empty() {
            return Err(RuntimeError::PersonaFailures(failures));
        }
        let summary = self
            .summarize_driver_cyclist(context, &driver_points, &evaluations, transcript)
            .await?;
        Ok(BaselineOutcome {
            baseline: Baseline {
                evaluations,
                driver_points,
                summary: summary.value,
            },
            attempts,
        })
    }

    /// Re-evaluates a rendered design with the four cyclist personas. Each
    /// persona sees only its own prompt.
    pub async fn evaluate_design(
        &self,
        context: &StreetContext,
        spec: &DesignSpec,
        image: &ImageRef,
        transcript: &Transcript,
    ) -> Result<EvaluationOutcome, RuntimeError> {
        self.require_image(image)?;
        let results = join_all(PersonaId::CYCLISTS.into_iter().map(|p| async move {
            (p, self.evaluate_one(p, context, Some(spec), image, transcript).await)
        }))
        .await;
        let (evaluations, attempts) = collect(results)?;
        Ok(EvaluationOutcome { evaluations, attempts })
    }

    pub async fn summarize_driver_cyclist(
        &self,
        context: &StreetContext,
        driver_points: &[String],
        evaluations: &[PersonaEvaluation],
        transcript: &Transcript,
    ) -> Result<Attempted<DriverCyclistSummary>, RuntimeError> {
        if driver_points.is_empty() || evaluations.is_empty() {
            return Err(RuntimeError::Precondition(
                "summary needs driver points and at least one cyclist evaluation".into(),
            ));
        }
        let prompt = render_summary_prompt(context, driver_points, evaluations);
        let req = request(RequestKind::Summarize, SchemaTag::Summary, None, prompt, Vec::new())?
            .with_hints(RequestHints {
                context: Some(context.clone()),
                evaluations: evaluations.to_vec(),
                driver_points: driver_points.to_vec(),
                ..RequestHints::default()
            });
        self.call(&req, transcript, |out| {
            validate_summary(text_of(out)?).map_err(rejection)
        })
        .await
        .map_err(RuntimeError::Summary)
    }

    /// Structured improvement suggestions for one design from one persona.
    #[allow(clippy::too_many_arguments)]
    pub async fn deep_analysis(
        &self,
        persona: PersonaId,
        context: &StreetContext,
        design_description: &str,
        image: &ImageRef,
        history: &[ChatMessage],
        user_message: &str,
        transcript: &Transcript,
    ) -> Result<Attempted<DeepAnalysisReport>, RuntimeError> {
        check_history(persona, history)?;
        if user_message.trim().is_empty() {
            return Err(RuntimeError::Precondition("message is empty".into()));
        }
        self.require_image(image)?;
        let prompt = render_deep_analysis_prompt(self.catalog.get(persona), design_description, history, user_message);
        let req = request(
            RequestKind::DeepAnalysis,
            SchemaTag::DeepAnalysis,
            Some(persona),
            prompt,
            vec![image.clone()],
        )?
        .with_hints(RequestHints {
            context: Some(context.clone()),
            question: Some(user_message.to_string()),
            ..RequestHints::default()
        });
        self.call(&req, transcript, |out| {
            let report = validate_deep_analysis(text_of(out)?).map_err(rejection)?;
            expect_persona(persona, report.persona())?;
            Ok(report)
        })
        .await
        .map_err(|error| RuntimeError::PersonaFailures(vec![PersonaFailure { persona, error }]))
    }

    /// Free-form in-character reply grounded in the session's baseline.
    pub async fn persona_chat(
        &self,
        persona: PersonaId,
        grounding: &ChatGrounding<'_>,
        image: Option<&ImageRef>,
        history: &[ChatMessage],
        user_message: &str,
        transcript: &Transcript,
    ) -> Result<ChatReply, RuntimeError> {
        check_history(persona, history)?;
        if user_message.trim().is_empty() {
            return Err(RuntimeError::Precondition("message is empty".into()));
        }
        let prompt = render_chat_prompt(self.catalog.get(persona), grounding, history, user_message);
        let images = image.into_iter().cloned().collect();
        let req = request(RequestKind::Chat, SchemaTag::ChatText, Some(persona), prompt, images)?
            .with_hints(RequestHints {
                context: Some(grounding.context.clone()),
                question: Some(user_message.to_string()),
                ..RequestHints::default()
            });
        let reply = self
            .call(&req, transcript, |out| {
                let text = text_of(out)?.trim();
                if text.is_empty() {
                    return Err((FailureKind::Output, "empty completion".into()));
                }
                Ok(text.to_string())
            })
            .await
            .map_err(|error| RuntimeError::PersonaFailures(vec![PersonaFailure { persona, error }]))?;
        let words = count_words(&reply.value);
        let mut warnings = Vec::new();
        if words > CHAT_WORD_GUIDELINE {
            warnings.push(format!(
                "reply has {words} words, over the {CHAT_WORD_GUIDELINE}-word guideline"
            ));
        }
        Ok(ChatReply {
            persona,
            text: reply.value,
            warnings,
            attempts: reply.attempts,
        })
    }

    /// One persona scores two or more designs and picks a favourite.
    #[allow(clippy::too_many_arguments)]
    pub async fn compare_designs(
        &self,
        persona: PersonaId,
        context: &StreetContext,
        designs: &[DesignCandidate],
        history: &[ChatMessage],
        user_message: &str,
        transcript: &Transcript,
    ) -> Result<Attempted<ComparisonVerdict>, RuntimeError> {
        check_candidates(designs, 2)?;
        check_history(persona, history)?;
        for d in designs {
            self.require_image(&d.image)?;
        }
        let options: Vec<DesignOption<'_>> = designs
            .iter()
            .map(|d| DesignOption { id: &d.id, spec: &d.spec })
            .collect();
        let prompt = render_comparison_prompt(self.catalog.get(persona), &options, history, user_message);
        let req = request(
            RequestKind::Compare,
            SchemaTag::Comparison,
            Some(persona),
            prompt,
            designs.iter().map(|d| d.image.clone()).collect(),
        )?
        .with_hints(RequestHints {
            context: Some(context.clone()),
            designs: designs.iter().map(|d| (d.id.clone(), d.spec.clone())).collect(),
            question: Some(user_message.to_string()),
            ..RequestHints::default()
        });
        let presented: Vec<String> = designs.iter().map(|d| d.id.clone()).collect();
        self.call(&req, transcript, |out| {
            let verdict = validate_comparison(text_of(out)?, &presented).map_err(rejection)?;
            expect_persona(persona, verdict.persona())?;
            Ok(verdict)
        })
        .await
        .map_err(|error| RuntimeError::PersonaFailures(vec![PersonaFailure { persona, error }]))
    }

    /// Runs [`compare_designs`](Self::compare_designs) for several personas
    /// concurrently; verdicts come back in the order given.
    pub async fn compare_across(
        &self,
        personas: &[PersonaId],
        context: &StreetContext,
        designs: &[DesignCandidate],
        histories: &BTreeMap<PersonaId, Vec<ChatMessage>>,
        user_message: &str,
        transcript: &Transcript,
    ) -> Result<Vec<ComparisonVerdict>, RuntimeError> {
        check_candidates(designs, 2)?;
        let empty = Vec::new();
        let results = join_all(personas.iter().map(|&p| {
            let history = histories.get(&p).unwrap_or(&empty);
            async move {
                let r = self
                    .compare_designs(p, context, designs, history, user_message, transcript)
                    .await;
                (p, r)
            }
        }))
        .await;
        let mut verdicts = Vec::new();
        let mut failures = Vec::new();
        for (_, result) in results {
            match result {
                Ok(a) => verdicts.push(a.value),
                Err(RuntimeError::PersonaFailures(f)) => failures.extend(f),
                Err(other) => return Err(other),
            }
        }
        if failures.is_empty() {
            Ok(verdicts)
        } else {
            failures.sort_by_key(|f| f.persona);
            Err(RuntimeError::PersonaFailures(failures))
        }
    }

    /// Keyword overlap between a question and a persona's priorities.
    pub fn score_relevance(&self, question: &str, persona: PersonaId) -> f64 {
        keyword_relevance(question, &self.catalog.get(persona).keywords)
    }

    /// Asks each persona the same question; replies come back most relevant
    /// first.
    pub async fn run_discussion(
        &self,
        question: &str,
        personas: &[PersonaId],
        context: &StreetContext,
        designs: &[DesignCandidate],
        transcript: &Transcript,
    ) -> Result<Vec<DiscussionTurn>, RuntimeError> {
        if question.trim().is_empty() {
            return Err(RuntimeError::Precondition("question is empty".into()));
        }
        if personas.is_empty() {
            return Err(RuntimeError::Precondition("no personas selected".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = personas.iter().find(|p| !seen.insert(**p)) {
            return Err(RuntimeError::Precondition(format!("persona {dup} selected twice")));
        }
        check_candidates(designs, 0)?;
        let options: Vec<DesignOption<'_>> = designs
            .iter()
            .map(|d| DesignOption { id: &d.id, spec: &d.spec })
            .collect();
        let hints = RequestHints {
            context: Some(context.clone()),
            designs: designs.iter().map(|d| (d.id.clone(), d.spec.clone())).collect(),
            question: Some(question.to_string()),
            ..RequestHints::default()
        };
        let images: Vec<ImageRef> = designs.iter().map(|d| d.image.clone()).collect();
        let mut requests = Vec::new();
        for &p in personas {
            let prompt = render_discussion_prompt(self.catalog.get(p), context, &options, question);
            let req = request(RequestKind::Discuss, SchemaTag::DiscussionReply, Some(p), prompt, images.clone())?
                .with_hints(hints.clone());
            requests.push((p, req));
        }
        let results = join_all(requests.iter().map(|(p, req)| async move {
            let r = self
                .call(req, transcript, |out| {
                    let reply = validate_discussion_reply(text_of(out)?).map_err(rejection)?;
                    expect_persona(*p, reply.persona)?;
                    Ok(reply)
                })
                .await;
            (*p, r)
        }))
        .await;
        let (replies, _) = collect(results)?;
        let mut turns: Vec<DiscussionTurn> = replies
            .into_iter()
            .map(|r| DiscussionTurn {
                persona: r.persona,
                relevance: r
                    .relevance
                    .unwrap_or_else(|| self.score_relevance(question, r.persona)),
                reply: r.reply,
            })
            .collect();
        order_turns(&mut turns);
        Ok(turns)
    }

    /// Edits the base street image according to a compiled design prompt and
    /// stores the result.
    pub async fn render_design_image(
        &self,
        base: &ImageRef,
        prompt: &CompiledPrompt,
        transcript: &Transcript,
    ) -> Result<ImageRef, RuntimeError> {
        self.require_image(base)?;
        let req = request(
            RequestKind::RenderImage,
            SchemaTag::Image,
            None,
            prompt.text.clone(),
            vec![base.clone()],
        )?
        .with_hints(RequestHints {
            spec: Some(prompt.spec.clone()),
            ..RequestHints::default()
        });
        self.call(&req, transcript, |out| match out {
            BackendOutput::Image(bytes) => self
                .images
                .put(bytes, ImageSource::Generated)
                .map_err(|e| (FailureKind::Output, e.to_string())),
            BackendOutput::Text(_) => Err((FailureKind::Output, "expected an image, got text".into())),
        })
        .await
        .map(|a| a.value)
        .map_err(|error| RuntimeError::Render {
            prompt_sha256: prompt.sha256(),
            error,
        })
    }
}
