use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde_json::{json, Value};
use streetpersona_core::geo::{Coordinates, GeoError, OverpassClient, ResponseCache, StreetViewClient, ViewParams};
use streetpersona_core::images::{synthetic_png, ImageSource, ImageStore};
use streetpersona_core::persona::PersonaId;
use streetpersona_core::runtime::{
    AgentBackend, BackendError, BackendOutput, BackendRequest, LiveBackend, LiveConfig, RequestKind, SchemaTag,
};
use streetpersona_core::sha256_hex;

const OVERPASS_DOC: &str = r#"{"version":0.6,"elements":[
 {"type":"way","id":1,"tags":{"highway":"primary","name":"Baltimore Avenue","cycleway:right":"lane"}},
 {"type":"way","id":2,"tags":{"highway":"primary","name":"Baltimore Avenue"}},
 {"type":"way","id":3,"tags":{"highway":"residential","name":"College Avenue"}},
 {"type":"way","id":4,"tags":{"highway":"service"}},
 {"type":"node","id":5,"tags":{"highway":"traffic_signals"}},
 {"type":"way","id":6,"tags":{"building":"yes"}},
 {"type":"way","id":7,"tags":{"building":"house"}}
]}"#;

#[derive(Clone, Default)]
struct Stub {
    hits: Arc<AtomicUsize>,
    last_body: Arc<parking_lot::Mutex<Vec<u8>>>,
    last_auth: Arc<parking_lot::Mutex<Option<String>>>,
}

async fn serve(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}

fn coords() -> Coordinates {
    Coordinates::new(39.9526, -75.1652).unwrap()
}

#[tokio::test]
async fn overpass_context_is_parsed_and_cached() {
    let stub = Stub::default();
    let app = Router::new()
        .route(
            "/ok",
            post(|State(s): State<Stub>, body: Bytes| async move {
                s.hits.fetch_add(1, Ordering::SeqCst);
                *s.last_body.lock() = body.to_vec();
                OVERPASS_DOC
            }),
        )
        .route("/denied", post(|| async { (StatusCode::FORBIDDEN, "rate limited") }))
        .route("/broken", post(|| async { "{\"elements\": [" }))
        .with_state(stub.clone());
    let base = serve(app).await;
    let dir = tempfile::tempdir().unwrap();

    let client = OverpassClient::new(format!("{base}/ok"), ResponseCache::new(dir.path()));
    let ctx = client.fetch_context(coords(), 100.0).await.unwrap();
    assert_eq!(ctx.roads.len(), 2);
    assert_eq!(ctx.roads[0].name, "Baltimore Avenue");
    assert_eq!(ctx.roads[1].road_type, "residential");
    assert_eq!(ctx.buildings, 2);
    assert_eq!(ctx.traffic_signals, 1);
    assert!(ctx.has_bike_infrastructure);
    let sent = String::from_utf8(stub.last_body.lock().clone()).unwrap();
    assert!(sent.starts_with("data="));

    let again = client.fetch_context(coords(), 100.0).await.unwrap();
    assert_eq!(again, ctx);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1, "second call should come from cache");

    let denied = OverpassClient::new(format!("{base}/denied"), ResponseCache::new(dir.path()));
    match denied.fetch_context(coords(), 100.0).await {
        Err(GeoError::Transport { status: Some(403), .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    let broken = OverpassClient::new(format!("{base}/broken"), ResponseCache::new(dir.path()));
    assert!(matches!(broken.fetch_context(coords(), 100.0).await, Err(GeoError::Parse { .. })));
    // bad radius never reaches the network
    assert!(matches!(client.fetch_context(coords(), 5000.0).await, Err(GeoError::Validation(_))));
}

#[tokio::test]
async fn street_view_fetch_cache_and_not_found() {
    let real = synthetic_png(b"street", 16, 16);
    let sentinel = synthetic_png(b"no imagery", 16, 16);
    let stub = Stub::default();
    let (r, s) = (real.clone(), sentinel.clone());
    let app = Router::new()
        .route(
            "/img",
            get(move |State(st): State<Stub>| {
                let r = r.clone();
                async move {
                    st.hits.fetch_add(1, Ordering::SeqCst);
                    r
                }
            }),
        )
        .route("/placeholder", get(move || {
            let s = s.clone();
            async move { s }
        }))
        .route("/missing", get(|| async { StatusCode::NOT_FOUND }))
        .with_state(stub.clone());
    let base = serve(app).await;
    let dir = tempfile::tempdir().unwrap();
    let images = ImageStore::new(dir.path().join("images"));
    let cache = ResponseCache::new(dir.path());

    let client = StreetViewClient::new(format!("{base}/img"), Some("k".into()), cache.clone(), images.clone());
    let a = client.fetch_street_image(coords(), ViewParams::default()).await.unwrap();
    let b = client.fetch_street_image(coords(), ViewParams::default()).await.unwrap();
    assert_eq!(a, b);
    assert_eq!(a.id, sha256_hex(&real));
    assert_eq!(a.source, ImageSource::StreetView);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);

    let placeholder = StreetViewClient::new(format!("{base}/placeholder"), None, cache.clone(), images.clone())
        .with_no_imagery_hashes([sha256_hex(&sentinel)]);
    assert!(matches!(
        placeholder.fetch_street_image(coords(), ViewParams::default()).await,
        Err(GeoError::NotFound(_))
    ));
    let missing = StreetViewClient::new(format!("{base}/missing"), None, cache, images);
    assert!(matches!(missing.fetch_street_image(coords(), ViewParams::default()).await, Err(GeoError::NotFound(_))));
    let too_big = ViewParams { width: 2048, ..ViewParams::default() };
    assert!(matches!(client.fetch_street_image(coords(), too_big).await, Err(GeoError::Validation(_))));
}

fn auth(headers: &HeaderMap) -> Option<String> {
    headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string)
}

#[tokio::test]
async fn live_backend_speaks_chat_and_image_edit() {
    let stub = Stub::default();
    let edited = synthetic_png(b"edited", 8, 8);
    let encoded = base64::engine::general_purpose::STANDARD.encode(&edited);
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(s): State<Stub>, headers: HeaderMap, Json(body): Json<Value>| async move {
                *s.last_auth.lock() = auth(&headers);
                *s.last_body.lock() = serde_json::to_vec(&body).unwrap();
                Json(json!({ "choices": [{ "message": { "content": "{\"ok\":true}" } }] }))
            }),
        )
        .route(
            "/v1/images/edits",
            post(move |State(s): State<Stub>, body: Bytes| {
                let encoded = encoded.clone();
                async move {
                    *s.last_body.lock() = body.to_vec();
                    Json(json!({ "data": [{ "b64_json": encoded }] }))
                }
            }),
        )
        .with_state(stub.clone());
    let base = serve(app).await;
    let dir = tempfile::tempdir().unwrap();
    let images = ImageStore::new(dir.path().join("images"));
    let street = images.put(&synthetic_png(b"base", 8, 8), ImageSource::Fixture).unwrap();
    let config = LiveConfig { endpoint: format!("{base}/v1/"), ..LiveConfig::new("secret") };
    let backend = LiveBackend::new(config, images).unwrap();
    assert!(!backend.metadata().deterministic);

    let req = BackendRequest::new(
        RequestKind::Evaluate,
        SchemaTag::Evaluation,
        Some(PersonaId::StrongFearless),
        "rate this".into(),
        vec![street.clone()],
    )
    .unwrap();
    let out = backend.complete(&req).await.unwrap();
    assert_eq!(out, BackendOutput::Text("{\"ok\":true}".into()));
    assert_eq!(stub.last_auth.lock().as_deref(), Some("Bearer secret"));
    let sent: Value = serde_json::from_slice(&stub.last_body.lock()).unwrap();
    assert_eq!(sent["model"], "gpt-4.1");
    assert_eq!(sent["response_format"]["type"], "json_object");
    assert_eq!(sent["messages"][0]["content"][0]["text"], "rate this");
    let url = sent["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
    assert!(url.starts_with("data:image/png;base64,"));

    let chat = BackendRequest::new(RequestKind::Chat, SchemaTag::ChatText, Some(PersonaId::Driver), "hi".into(), vec![])
        .unwrap();
    backend.complete(&chat).await.unwrap();
    let sent: Value = serde_json::from_slice(&stub.last_body.lock()).unwrap();
    assert!(sent.get("response_format").is_none());

    let render = BackendRequest::new(RequestKind::RenderImage, SchemaTag::Image, None, "add a lane".into(), vec![street])
        .unwrap();
    assert_eq!(backend.complete(&render).await.unwrap(), BackendOutput::Image(edited));
    let form = String::from_utf8_lossy(&stub.last_body.lock()).to_string();
    assert!(form.contains("gpt-image-1"));
    assert!(form.contains("add a lane"));
    assert!(form.contains("filename=\"base.png\""));
}

#[tokio::test]
async fn live_backend_maps_http_errors() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async { (StatusCode::TOO_MANY_REQUESTS, "x".repeat(2000)) }),
    );
    let base = serve(app).await;
    let dir = tempfile::tempdir().unwrap();
    let config = LiveConfig { endpoint: format!("{base}/v1"), ..LiveConfig::new("k") };
    let backend = LiveBackend::new(config, ImageStore::new(dir.path())).unwrap();
    let req = BackendRequest::new(RequestKind::Chat, SchemaTag::ChatText, Some(PersonaId::Driver), "hi".into(), vec![])
        .unwrap();
    match backend.complete(&req).await {
        Err(BackendError::Transport { status: Some(429), message }) => assert_eq!(message.len(), 500),
        other => panic!("unexpected {other:?}"),
    }
}
