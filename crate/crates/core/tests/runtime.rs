mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use common::{fixture_context, harness, spec};
use proptest::prelude::*;
use streetpersona_core::design::{compile_image_prompt, BufferLocation, BufferType, LaneColor, LaneWidth};
use streetpersona_core::images::ImageSource;
use streetpersona_core::persona::prompts::ChatGrounding;
use streetpersona_core::persona::{ChatChannel, ChatMessage, ChatRole, PersonaId};
use streetpersona_core::runtime::testing::ScriptedBackend;
use streetpersona_core::runtime::{
    order_turns, AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, DesignCandidate,
    DiscussionTurn, EntryOutcome, FailureKind, MockBackend, ReplayBackend, RequestKind, RetryPolicy, RuntimeError,
    Transcript,
};

use PersonaId::*;

const VALID_IBC: &str = r#"{"persona":"Interested but Concerned","safety":4,"comfort":4,"total":4,"points":["No physical protection from passing cars","Traffic feels too close and fast","I would avoid riding here alone","Need clear separation before I ride"]}"#;

fn scripted() -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(Arc::new(MockBackend::new())))
}

#[tokio::test]
async fn two_invalid_replies_then_success_uses_three_attempts() {
    let backend = scripted();
    backend.push_text(RequestKind::Evaluate, Some(InterestedConcerned), "not json at all");
    backend.push_text(RequestKind::Evaluate, Some(InterestedConcerned), r#"{"persona":"Interested but Concerned","safety":4}"#);
    backend.push_text(RequestKind::Evaluate, Some(InterestedConcerned), VALID_IBC);
    let h = harness(backend.clone());
    let tx = Transcript::new();
    let out = h.runtime.run_baseline_evaluation(&fixture_context(false), &h.base, &tx).await.unwrap();
    assert_eq!(out.attempts[&InterestedConcerned], 3);
    assert_eq!(out.attempts[&StrongFearless], 1);
    assert_eq!(backend.calls(RequestKind::Evaluate, Some(InterestedConcerned)), 3);
    let ibc: Vec<_> = tx
        .entries()
        .into_iter()
        .filter(|e| e.persona == Some(InterestedConcerned))
        .collect();
    assert_eq!(ibc.iter().map(|e| e.attempt).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(matches!(ibc[0].outcome, EntryOutcome::Failed { kind: FailureKind::Parse, .. }));
    assert!(matches!(ibc[1].outcome, EntryOutcome::Failed { kind: FailureKind::Schema, .. }));
    assert!(matches!(ibc[2].outcome, EntryOutcome::Ok { .. }));
}

#[tokio::test]
async fn three_invalid_replies_name_the_persona() {
    let backend = scripted();
    for _ in 0..3 {
        backend.push_text(RequestKind::Evaluate, Some(EnthusedConfident), "{\"persona\": ");
    }
    let h = harness(backend.clone());
    let err = h
        .runtime
        .run_baseline_evaluation(&fixture_context(false), &h.base, &Transcript::new())
        .await
        .unwrap_err();
    match &err {
        RuntimeError::PersonaFailures(f) => {
            assert_eq!(f.len(), 1);
            assert_eq!(f[0].persona, EnthusedConfident);
            assert_eq!(f[0].error.attempts, 3);
            assert_eq!(f[0].error.kind, FailureKind::Parse);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("enthused-confident"));
    // no summary when a persona failed
    assert_eq!(backend.calls(RequestKind::Summarize, None), 0);
}

#[tokio::test]
async fn transport_errors_retry_but_unsupported_does_not() {
    let backend = scripted();
    backend.push(
        RequestKind::Chat,
        Some(StrongFearless),
        Err(BackendError::Transport { status: Some(503), message: "busy".into() }),
    );
    backend.push(RequestKind::Chat, Some(EnthusedConfident), Err(BackendError::Unsupported("nope".into())));
    let h = harness(backend.clone());
    let ctx = fixture_context(false);
    let baseline = h.runtime.run_baseline_evaluation(&ctx, &h.base, &Transcript::new()).await.unwrap().baseline;
    let grounding = ChatGrounding {
        coords: ctx.coords,
        context: &ctx,
        evaluation: Some(&baseline.evaluations[0]),
        driver_points: &baseline.driver_points,
        summary: &baseline.summary,
    };
    let tx = Transcript::new();
    let reply = h.runtime.persona_chat(StrongFearless, &grounding, None, &[], "hi", &tx).await.unwrap();
    assert_eq!(reply.attempts, 2);
    let err = h.runtime.persona_chat(EnthusedConfident, &grounding, None, &[], "hi", &tx).await.unwrap_err();
    assert_eq!(backend.calls(RequestKind::Chat, Some(EnthusedConfident)), 1);
    assert!(matches!(err, RuntimeError::PersonaFailures(ref f) if f[0].error.kind == FailureKind::Unsupported));
}

#[tokio::test]
async fn attempts_never_exceed_policy() {
    let backend = scripted();
    for _ in 0..10 {
        backend.push_text(RequestKind::DeepAnalysis, Some(Driver), "garbage");
    }
    let h = harness(backend.clone());
    let runtime = h.runtime.clone().with_policy(RetryPolicy::with_max_attempts(5).unwrap().without_backoff());
    let err = runtime
        .deep_analysis(Driver, &fixture_context(false), "Existing street", &h.base, &[], "thoughts?", &Transcript::new())
        .await
        .unwrap_err();
    assert_eq!(backend.calls(RequestKind::DeepAnalysis, Some(Driver)), 5);
    assert!(matches!(err, RuntimeError::PersonaFailures(ref f) if f[0].error.attempts == 5));
}

#[tokio::test]
async fn personas_never_see_each_others_output() {
    let backend = scripted();
    let h = harness(backend.clone());
    let ctx = fixture_context(false);
    let tx = Transcript::new();
    let baseline = h.runtime.run_baseline_evaluation(&ctx, &h.base, &tx).await.unwrap().baseline;
    let design = spec(LaneWidth::Widen, LaneColor::Green, BufferType::NarrowBollards, Some(BufferLocation::ParkedCars));
    let designed = h.runtime.evaluate_design(&ctx, &design, &h.base, &tx).await.unwrap();
    let history = |p: PersonaId| {
        vec![ChatMessage {
            persona: p,
            role: ChatRole::User,
            channel: ChatChannel::Analysis,
            text: "earlier question".into(),
        }]
    };
    for p in PersonaId::ALL {
        h.runtime
            .deep_analysis(p, &ctx, &design.describe(), &h.base, &history(p), "what now?", &tx)
            .await
            .unwrap();
    }

    let mut produced: Vec<(PersonaId, String)> = Vec::new();
    for e in baseline.evaluations.iter().chain(&designed.evaluations) {
        for point in e.points() {
            produced.push((e.persona(), point.clone()));
        }
    }
    for point in &baseline.driver_points {
        produced.push((Driver, point.clone()));
    }
    for req in backend.requests() {
        if matches!(req.kind, RequestKind::Summarize | RequestKind::Compare | RequestKind::Discuss) {
            continue;
        }
        let Some(owner) = req.persona else { continue };
        for (author, text) in &produced {
            // generic design phrases are shared by construction; only
            // persona-distinct lines count as leaks
            let shared = produced.iter().any(|(a, t)| a != author && t == text);
            if *author != owner && !shared {
                assert!(!req.prompt.contains(text.as_str()), "{owner} request contains {author} output {text:?}");
            }
        }
    }
}

#[tokio::test]
async fn foreign_history_is_rejected() {
    let h = harness(Arc::new(MockBackend::new()));
    let foreign = vec![ChatMessage {
        persona: NoWayNoHow,
        role: ChatRole::Persona,
        channel: ChatChannel::Analysis,
        text: "too dangerous".into(),
    }];
    let err = h
        .runtime
        .deep_analysis(InterestedConcerned, &fixture_context(false), "Existing street", &h.base, &foreign, "why?", &Transcript::new())
        .await
        .unwrap_err();
    assert!(matches!(err, RuntimeError::Precondition(_)));
}

#[tokio::test]
async fn deep_analysis_uses_persona_table() {
    let h = harness(Arc::new(MockBackend::new()));
    let report = h
        .runtime
        .deep_analysis(InterestedConcerned, &fixture_context(false), "Existing street", &h.base, &[], "why do you feel unsafe?", &Transcript::new())
        .await
        .unwrap()
        .value;
    assert_eq!(report.persona(), InterestedConcerned);
    assert_eq!(report.key_concerns(), ["close passing traffic", "no physical barrier", "door zone exposure"]);
    assert_eq!(report.non_negotiables(), ["Physical separation from moving cars"]);
}

async fn chat_setup(backend: Arc<ScriptedBackend>, persona: PersonaId) -> Result<streetpersona_core::runtime::ChatReply, RuntimeError> {
    let h = harness(backend);
    let ctx = fixture_context(false);
    let baseline = h.runtime.run_baseline_evaluation(&ctx, &h.base, &Transcript::new()).await.unwrap().baseline;
    let grounding = ChatGrounding {
        coords: ctx.coords,
        context: &ctx,
        evaluation: baseline.evaluations.iter().find(|e| e.persona() == persona),
        driver_points: &baseline.driver_points,
        summary: &baseline.summary,
    };
    h.runtime.persona_chat(persona, &grounding, Some(&h.base), &[], "Would you ride here?", &Transcript::new()).await
}

#[tokio::test]
async fn chat_template_long_reply_and_empty_reply() {
    let reply = chat_setup(scripted(), StrongFearless).await.unwrap();
    assert!(reply.text.starts_with("Honestly, I'm fine riding here"));
    assert!(reply.warnings.is_empty());

    let backend = scripted();
    backend.push_text(RequestKind::Chat, Some(Driver), &"word ".repeat(200));
    let reply = chat_setup(backend, Driver).await.unwrap();
    assert_eq!(reply.warnings.len(), 1);
    assert!(reply.warnings[0].contains("200 words"));

    let backend = scripted();
    for _ in 0..3 {
        backend.push_text(RequestKind::Chat, Some(NoWayNoHow), "   ");
    }
    let err = chat_setup(backend, NoWayNoHow).await.unwrap_err();
    assert!(err.to_string().contains("empty completion"), "{err}");
}

fn candidates(h: &common::Harness) -> Vec<DesignCandidate> {
    vec![
        DesignCandidate {
            id: "A".into(),
            spec: spec(LaneWidth::Widen, LaneColor::Green, BufferType::NoBuffer, None),
            image: h.base.clone(),
        },
        DesignCandidate {
            id: "B".into(),
            spec: spec(LaneWidth::Widen, LaneColor::Green, BufferType::NarrowBollards, Some(BufferLocation::ParkedCars)),
            image: h.base.clone(),
        },
    ]
}

#[tokio::test]
async fn comparison_scores_follow_rule_totals() {
    let h = harness(Arc::new(MockBackend::new()));
    let designs = candidates(&h);
    let v = h
        .runtime
        .compare_designs(InterestedConcerned, &fixture_context(false), &designs, &[], "Which one?", &Transcript::new())
        .await
        .unwrap()
        .value;
    // IbC: A = widen + green → (6,5) total 6; B adds bollards and parked side → (8,7) total 8
    let scores: Vec<(String, f64)> = v.scores().iter().map(|s| (s.design_id.clone(), s.score)).collect();
    assert_eq!(scores, vec![("A".into(), 0.6), ("B".into(), 0.8)]);
    assert_eq!(v.preferred_design(), "B");

    let err = h
        .runtime
        .compare_designs(InterestedConcerned, &fixture_context(false), &designs[..1], &[], "Which one?", &Transcript::new())
        .await
        .unwrap_err();
    assert!(matches!(err, RuntimeError::Precondition(_)));
}

#[tokio::test]
async fn verdict_missing_a_design_is_a_schema_error() {
    let backend = scripted();
    for _ in 0..3 {
        backend.push_text(
            RequestKind::Compare,
            Some(StrongFearless),
            r#"{"persona":"Strong & Fearless","scores":[{"design_id":"A","score":0.7,"rationale":"fast"}],"preferred_design":"A","deal_breakers":[]}"#,
        );
    }
    let h = harness(backend);
    let designs = candidates(&h);
    let err = h
        .runtime
        .compare_designs(StrongFearless, &fixture_context(false), &designs, &[], "Which?", &Transcript::new())
        .await
        .unwrap_err();
    match err {
        RuntimeError::PersonaFailures(f) => {
            assert_eq!(f[0].error.kind, FailureKind::Schema);
            assert!(f[0].error.message.contains("missing score for design \"B\""), "{}", f[0].error.message);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn discussion_orders_by_keyword_relevance() {
    let h = harness(Arc::new(MockBackend::new()));
    let turns = h
        .runtime
        .run_discussion("How does physical separation affect you?", &PersonaId::ALL, &fixture_context(false), &[], &Transcript::new())
        .await
        .unwrap();
    let order: Vec<_> = turns.iter().map(|t| t.persona).collect();
    assert_eq!(order, vec![InterestedConcerned, NoWayNoHow, StrongFearless, EnthusedConfident, Driver]);
    // 6 question tokens, 5 keywords, 1 shared → 1/10
    assert_eq!(turns[0].relevance, 0.1);
    assert_eq!(turns[1].relevance, 0.1);
    assert_eq!(turns[2].relevance, 0.0);

    let single = h
        .runtime
        .run_discussion("Is parking affected?", &[Driver], &fixture_context(false), &[], &Transcript::new())
        .await
        .unwrap();
    assert_eq!(single.len(), 1);
    // {is, parking, affected} vs 5 keywords sharing "parking" → 1/7
    assert!((single[0].relevance - 1.0 / 7.0).abs() < 1e-12);

    assert!(h.runtime.run_discussion("x", &[Driver, Driver], &fixture_context(false), &[], &Transcript::new()).await.is_err());
    assert!(h.runtime.run_discussion("  ", &[Driver], &fixture_context(false), &[], &Transcript::new()).await.is_err());
}

#[tokio::test]
async fn discussion_mentions_preferred_design() {
    let h = harness(Arc::new(MockBackend::new()));
    let designs = candidates(&h);
    let turns = h
        .runtime
        .run_discussion("Which design works?", &[InterestedConcerned, Driver], &fixture_context(false), &designs, &Transcript::new())
        .await
        .unwrap();
    let ibc = turns.iter().find(|t| t.persona == InterestedConcerned).unwrap();
    assert!(ibc.reply.contains("design B"));
    let driver = turns.iter().find(|t| t.persona == Driver).unwrap();
    assert!(driver.reply.contains("design A"));
}

#[test]
fn relevance_hand_cases() {
    let h = harness(Arc::new(MockBackend::new()));
    let r = |q: &str, p| h.runtime.score_relevance(q, p);
    assert!((r("speed and momentum matter", StrongFearless) - 2.0 / 7.0).abs() < 1e-12);
    assert_eq!(r("speed and momentum matter", NoWayNoHow), 0.0);
    assert_eq!(r("42 ?!", StrongFearless), 0.0);
    assert_eq!(r("Fast speed, overtake; efficiency MOMENTUM", StrongFearless), 1.0);
    assert!((r("Cars near the sidewalk", NoWayNoHow) - 2.0 / 7.0).abs() < 1e-12);
}

#[tokio::test]
async fn render_is_content_addressed_and_stable() {
    let h = harness(Arc::new(MockBackend::new()));
    let a = compile_image_prompt(&spec(LaneWidth::Widen, LaneColor::Green, BufferType::NoBuffer, None));
    let b = compile_image_prompt(&spec(LaneWidth::Narrow, LaneColor::Green, BufferType::NoBuffer, None));
    let tx = Transcript::new();
    let first = h.runtime.render_design_image(&h.base, &a, &tx).await.unwrap();
    let again = h.runtime.render_design_image(&h.base, &a, &tx).await.unwrap();
    let other = h.runtime.render_design_image(&h.base, &b, &tx).await.unwrap();
    assert_eq!(first, again);
    assert_ne!(first.id, other.id);
    assert_eq!(first.source, ImageSource::Generated);
    assert!(h.runtime.images().contains(&first));
    assert!(matches!(&tx.entries()[0].outcome, EntryOutcome::Image { image_id } if *image_id == first.id));
}

#[tokio::test]
async fn render_failure_carries_prompt_hash() {
    let backend = scripted();
    for _ in 0..3 {
        backend.push(RequestKind::RenderImage, None, Ok(BackendOutput::Image(b"not an image".to_vec())));
    }
    let h = harness(backend);
    let prompt = compile_image_prompt(&spec(LaneWidth::Widen, LaneColor::Green, BufferType::NoBuffer, None));
    match h.runtime.render_design_image(&h.base, &prompt, &Transcript::new()).await {
        Err(RuntimeError::Render { prompt_sha256, error }) => {
            assert_eq!(prompt_sha256, prompt.sha256());
            assert_eq!(error.attempts, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn summary_missing_driver_cons_fails() {
    let backend = scripted();
    for _ in 0..3 {
        backend.push_text(RequestKind::Summarize, None, r#"{"driver":{"pros":"ok"},"cyclist":{"pros":"a","cons":"b"}}"#);
    }
    let h = harness(backend);
    let err = h
        .runtime
        .run_baseline_evaluation(&fixture_context(false), &h.base, &Transcript::new())
        .await
        .unwrap_err();
    match err {
        RuntimeError::Summary(e) => assert!(e.message.contains("driver.cons"), "{}", e.message),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn mock_pipeline_is_deterministic_and_replayable() {
    let h = harness(Arc::new(MockBackend::new()));
    let ctx = fixture_context(true);
    let tx = Transcript::new();
    let one = h.runtime.run_baseline_evaluation(&ctx, &h.base, &tx).await.unwrap();
    let two = h.runtime.run_baseline_evaluation(&ctx, &h.base, &Transcript::new()).await.unwrap();
    assert_eq!(one, two);

    let path = h.dir.path().join("transcripts/t.jsonl");
    tx.flush_to(&path).unwrap();
    assert!(tx.is_empty());
    let entries = streetpersona_core::runtime::read_transcript(&path).unwrap();
    assert_eq!(entries.len(), 6);
    let replay = harness(Arc::new(ReplayBackend::new(entries, h.runtime.images().clone())));
    // same base image bytes → same id, so fingerprints line up
    assert_eq!(replay.base.id, h.base.id);
    let replayed = replay.runtime.run_baseline_evaluation(&ctx, &replay.base, &Transcript::new()).await.unwrap();
    assert_eq!(replayed, one);
}

struct SlowBackend {
    inner: MockBackend,
    live: AtomicUsize,
    peak: AtomicUsize,
}

#[async_trait]
impl AgentBackend for SlowBackend {
    fn metadata(&self) -> BackendMetadata {
        self.inner.metadata()
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        tokio::time::sleep(Duration::from_millis(20)).await;
        self.live.fetch_sub(1, Ordering::SeqCst);
        self.inner.complete(request).await
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallelism_cap_bounds_concurrent_calls() {
    for cap in [1usize, 2, 5] {
        let backend = Arc::new(SlowBackend {
            inner: MockBackend::new(),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let h = harness(backend.clone());
        let runtime = h.runtime.clone().with_parallelism(cap);
        let out = runtime.run_baseline_evaluation(&fixture_context(false), &h.base, &Transcript::new()).await.unwrap();
        assert_eq!(out.baseline.evaluations.len(), 4);
        let peak = backend.peak.load(Ordering::SeqCst);
        assert!(peak <= cap, "cap {cap} peak {peak}");
        if cap == 5 {
            assert!(peak >= 2, "calls did not overlap");
        }
    }
}

fn brute_sorted(turns: &[DiscussionTurn]) -> bool {
    turns.windows(2).all(|w| {
        w[0].relevance > w[1].relevance || (w[0].relevance == w[1].relevance && w[0].persona < w[1].persona)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, .. ProptestConfig::default() })]

    #[test]
    fn turn_order_is_non_increasing_with_canonical_ties(
        rels in prop::collection::vec(prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..=1.0], 5),
        shuffle in Just(PersonaId::ALL.to_vec()).prop_shuffle(),
        keep in 1usize..=5,
    ) {
        let mut turns: Vec<DiscussionTurn> = shuffle[..keep]
            .iter()
            .zip(&rels)
            .map(|(p, r)| DiscussionTurn { persona: *p, relevance: *r, reply: String::new() })
            .collect();
        let mut again = turns.clone();
        again.reverse();
        order_turns(&mut turns);
        order_turns(&mut again);
        prop_assert!(brute_sorted(&turns));
        prop_assert_eq!(turns, again);
    }
}
