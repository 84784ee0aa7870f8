//! JSON-over-HTTP routes.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use streetpersona_core::design::RawDesignSpec;
use streetpersona_core::persona::PersonaId;
use streetpersona_core::store::ReportFormat;
use tower_http::cors::CorsLayer;

use crate::engine::{CreateSession, Engine, EngineError};

/// Error body: `{"status", "code", "message"}` plus `transcript_id` on timeouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            transcript_id: None,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::Validation(_) => ApiError::new(StatusCode::BAD_REQUEST, "validation", message),
            EngineError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            EngineError::NoImagery(_) => ApiError::new(StatusCode::NOT_FOUND, "no_imagery", message),
            EngineError::Backend(_) => ApiError::new(StatusCode::BAD_GATEWAY, "backend", message),
            EngineError::Upstream(_) => ApiError::new(StatusCode::BAD_GATEWAY, "upstream", message),
            EngineError::Storage(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message),
            EngineError::Timeout { transcript_id } => ApiError {
                transcript_id: Some(transcript_id),
                ..ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", message)
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// JSON body extractor whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => {
                let status = match rejection {
                    JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
                    _ => StatusCode::BAD_REQUEST,
                };
                Err(ApiError::new(status, "validation", rejection.body_text()))
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<Engine>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignBody {
    spec: RawDesignSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisBody {
    message: String,
    #[serde(default)]
    design_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareBody {
    design_ids: Vec<String>,
    message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscussionBody {
    question: String,
    #[serde(default)]
    design_ids: Vec<String>,
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

fn persona(token: &str) -> ApiResult<PersonaId> {
    token
        .parse()
        .map_err(|e: streetpersona_core::persona::UnknownPersona| ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()))
}

async fn create_session(State(engine): Shared, Body(req): Body<CreateSession>) -> ApiResult<Response> {
    let session = engine.create_session(&req).await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(State(engine): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(engine.session(&id)?).into_response())
}

async fn create_design(State(engine): Shared, Path(id): Path<String>, Body(body): Body<DesignBody>) -> ApiResult<Response> {
    let created = engine.create_design(&id, &body.spec).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn chat(
    State(engine): Shared,
    Path((id, p)): Path<(String, String)>,
    Body(body): Body<MessageBody>,
) -> ApiResult<Response> {
    let reply = engine.chat(&id, persona(&p)?, &body.message).await?;
    Ok(Json(reply).into_response())
}

async fn analysis(
    State(engine): Shared,
    Path((id, p)): Path<(String, String)>,
    Body(body): Body<AnalysisBody>,
) -> ApiResult<Response> {
    let report = engine
        .analysis(&id, persona(&p)?, body.design_id.as_deref(), &body.message)
        .await?;
    Ok(Json(report).into_response())
}

async fn compare(State(engine): Shared, Path(id): Path<String>, Body(body): Body<CompareBody>) -> ApiResult<Response> {
    let record = engine.compare(&id, &body.design_ids, &body.message).await?;
    Ok(Json(record).into_response())
}

async fn discussion(
    State(engine): Shared,
    Path(id): Path<String>,
    Body(body): Body<DiscussionBody>,
) -> ApiResult<Response> {
    let record = engine.discussion(&id, &body.question, &body.design_ids).await?;
    Ok(Json(record).into_response())
}

async fn report(State(engine): Shared, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let (format, body) = engine.report(&id, q.format.as_deref().unwrap_or("json"))?;
    let content_type = match format {
        ReportFormat::Json => "application/json",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

async fn stats(State(engine): Shared) -> ApiResult<Response> {
    Ok(Json(engine.stats()?).into_response())
}

async fn image(State(engine): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let (bytes, mime) = engine.image(&id)?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(engine: Arc<Engine>) -> Router {
    let cors = match HeaderValue::from_str(&engine.config().cors_origin) {
        Ok(origin) => CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
        Err(_) => CorsLayer::new(),
    };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/designs", post(create_design))
        .route("/sessions/{id}/personas/{persona}/chat", post(chat))
        .route("/sessions/{id}/personas/{persona}/analysis", post(analysis))
        .route("/sessions/{id}/compare", post(compare))
        .route("/sessions/{id}/discussion", post(discussion))
        .route("/sessions/{id}/report", get(report))
        .route("/stats", get(stats))
        .route("/images/{id}", get(image))
        .fallback(fallback)
        .layer(cors)
        .with_state(engine)
}

/// Serve until ctrl-c.
pub async fn serve(engine: Arc<Engine>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&engine.config().listen_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
