#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use streetpersona::api::router;
use streetpersona::config::ServiceConfig;
use streetpersona::engine::Engine;
use streetpersona_core::geo::FixtureGeo;
use streetpersona_core::images::ImageStore;
use streetpersona_core::runtime::{
    AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, MockBackend, RequestKind,
};
use tower::ServiceExt;

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    }
}

pub fn engine_with(config: ServiceConfig, backend: Arc<dyn AgentBackend>) -> Arc<Engine> {
    let geo = Arc::new(FixtureGeo::new(ImageStore::new(&config.data_dir)));
    Arc::new(Engine::with_parts(config, backend, geo).unwrap())
}

pub fn mock_app(dir: &Path) -> Router {
    router(engine_with(config(dir), Arc::new(MockBackend::new())))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, bytes)
}

pub async fn json(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|e| {
        panic!("{method} {uri} returned non-JSON ({e}): {}", String::from_utf8_lossy(&bytes))
    });
    (status, value)
}

/// Mock backend whose image renders stall.
pub struct SlowRender {
    pub inner: MockBackend,
    pub delay: Duration,
}

#[async_trait]
impl AgentBackend for SlowRender {
    fn metadata(&self) -> BackendMetadata {
        self.inner.metadata()
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        if request.kind == RequestKind::RenderImage {
            tokio::time::sleep(self.delay).await;
        }
        self.inner.complete(request).await
    }
}

pub const CREATE: &str = r#"{"lat": 39.9526, "lon": -75.1652}"#;
pub const DESIGN_A: &str = r#"{"spec": {"lane_width": "widen", "lane_color": "green", "buffer_type": "no-buffer"}}"#;
pub const DESIGN_B: &str = r#"{"spec": {"lane_width": "widen", "lane_color": "green", "buffer_type": "narrow-bollards", "buffer_location": "parked-cars"}}"#;
