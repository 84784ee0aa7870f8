#![allow(dead_code)]

use proptest::prelude::*;
use streetpersona_core::design::{BufferLocation, BufferType, DesignSpec, LaneColor, LaneWidth};
use streetpersona_core::geo::{Coordinates, Road, StreetContext};
use streetpersona_core::persona::{PersonaEvaluation, PersonaId};

pub fn fixture_context(bike: bool) -> StreetContext {
    StreetContext {
        coords: Coordinates::new(39.9526, -75.1652).unwrap(),
        roads: vec![
            Road {
                name: "Baltimore Avenue".into(),
                road_type: "primary".into(),
            },
            Road {
                name: "College Avenue".into(),
                road_type: "residential".into(),
            },
        ],
        buildings: 3,
        traffic_signals: 1,
        has_bike_infrastructure: bike,
        radius_m: 100.0,
    }
}

pub fn spec(w: LaneWidth, c: LaneColor, b: BufferType, l: Option<BufferLocation>) -> DesignSpec {
    DesignSpec::new(w, c, b, l).unwrap()
}

pub fn points(tag: &str) -> Vec<String> {
    (1..=4).map(|i| format!("{tag} observation number {i}")).collect()
}

pub fn eval(persona: PersonaId, safety: f64, comfort: f64, total: f64) -> PersonaEvaluation {
    PersonaEvaluation::new(persona, safety, comfort, total, points(persona.token())).unwrap()
}

pub fn arb_spec() -> impl Strategy<Value = DesignSpec> {
    (
        prop::sample::select(LaneWidth::ALL.to_vec()),
        prop::sample::select(LaneColor::ALL.to_vec()),
        prop::sample::select(BufferType::ALL.to_vec()),
        prop::sample::select(BufferLocation::ALL.to_vec()),
        prop::option::of("[a-z ]{1,30}"),
    )
        .prop_map(|(w, c, b, l, text)| {
            let loc = (b != BufferType::NoBuffer).then_some(l);
            let s = DesignSpec::new(w, c, b, loc).unwrap();
            match text {
                Some(t) => s.with_free_text(t),
                None => s,
            }
        })
}

/// Scores on the half-point grid in [1, 10].
pub fn arb_score() -> impl Strategy<Value = f64> {
    (2u32..=20).prop_map(|h| h as f64 / 2.0)
}

pub fn arb_cyclist_evals() -> impl Strategy<Value = Vec<PersonaEvaluation>> {
    prop::collection::vec((arb_score(), arb_score(), arb_score()), 4).prop_map(|scores| {
        PersonaId::CYCLISTS
            .iter()
            .zip(scores)
            .map(|(p, (s, c, t))| eval(*p, s, c, t))
            .collect()
    })
}

use std::sync::Arc;

use streetpersona_core::images::{synthetic_png, ImageRef, ImageSource, ImageStore};
use streetpersona_core::persona::PersonaCatalog;
use streetpersona_core::runtime::{AgentBackend, AgentRuntime, RetryPolicy};

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub runtime: AgentRuntime,
    pub base: ImageRef,
}

pub fn harness(backend: Arc<dyn AgentBackend>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let images = ImageStore::new(dir.path());
    let base = images
        .put(&synthetic_png(b"base street", 32, 32), ImageSource::Fixture)
        .unwrap();
    let runtime = AgentRuntime::new(backend, Arc::new(PersonaCatalog::builtin()), images)
        .with_policy(RetryPolicy::default().without_backoff());
    Harness { dir, runtime, base }
}
