//! HTTP JSON API over a [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use whyplan_core::service::{AskRequest, InjectRequest, Service, ServiceError, Session, SessionRecord, UpdatesRequest};

#[derive(Debug, Deserialize)]
struct CreateSession {
    domain: String,
    problem: String,
    #[serde(default)]
    plan: Option<String>,
}

#[derive(Debug, Deserialize)]
struct VersionQuery {
    #[serde(default)]
    version: Option<u64>,
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0.body())).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> ApiError {
        ApiError(e)
    }
}

type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

/// Bodies are parsed by hand so malformed JSON gets the same error document
/// as every other failure.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(ServiceError::Request(format!("bad request body: {e}"))))
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(ServiceError::Store(e.to_string())))?.map_err(ApiError)
}

fn ok<T: Serialize>(x: T) -> ApiResult<T> {
    Ok((StatusCode::OK, Json(x)))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/plan", get(plan))
        .route("/sessions/{id}/ask", post(ask))
        .route("/sessions/{id}/inject", post(inject))
        .route("/sessions/{id}/inject/top", delete(pop))
        .route("/sessions/{id}/updates", post(updates))
        .route("/sessions/{id}/report", get(report))
        .route("/replay", post(replay))
        .with_state(service)
}

async fn create(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<whyplan_core::service::SessionCreated> {
    let req: CreateSession = parse(&body)?;
    let created = blocking(move || {
        let h = svc.create(&req.domain, &req.problem, req.plan.as_deref())?;
        let s = h.lock().expect("session lock");
        Ok(s.created())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn plan(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<whyplan_core::service::PlanView> {
    ok(blocking(move || svc.with_session(&id, |s| Ok(s.plan_view()))).await?)
}

async fn ask(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<whyplan_core::service::ExplanationResponse> {
    let req: AskRequest = parse(&body)?;
    ok(blocking(move || svc.with_session(&id, |s| s.ask(&req))).await?)
}

async fn inject(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<whyplan_core::service::ExplanationResponse> {
    let req: InjectRequest = parse(&body)?;
    ok(blocking(move || svc.with_session(&id, |s| s.inject(&req))).await?)
}

async fn pop(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<whyplan_core::service::ExplanationResponse> {
    ok(blocking(move || svc.with_session(&id, |s| s.pop(q.version))).await?)
}

async fn updates(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<whyplan_core::service::UpdatesResponse> {
    let req: UpdatesRequest = parse(&body)?;
    ok(blocking(move || svc.with_session(&id, |s| s.updates(&req))).await?)
}

async fn report(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<SessionRecord> {
    ok(blocking(move || svc.with_session(&id, |s| Ok(s.export()))).await?)
}

async fn replay(body: Bytes) -> ApiResult<whyplan_core::service::ReplayReport> {
    let record: SessionRecord = parse(&body)?;
    ok(blocking(move || Session::replay(&record).map(|(_, r)| r)).await?)
}

/// Serves until interrupted.
pub async fn serve(service: Arc<Service>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
