//! JSON HTTP API over a [`SessionStore`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | optional settings | 201, [`SessionView`] |
//! | GET | `/sessions/{id}` | | [`SessionView`] |
//! | POST | `/sessions/{id}/actions` | [`ApplyRequest`] | [`ApplyResponse`] |
//! | GET | `/sessions/{id}/code?opt=N` | | [`CodeResponse`] |
//! | GET | `/sessions/{id}/dag?opt=N` | | [`DagResponse`] |
//! | GET | `/sessions/{id}/script` | | action script |
//! | DELETE | `/sessions/{id}` | | 204 |
//!
//! Errors are `{"error": code, "message": ...}` with status 404 for an
//! unknown session, 409 for a stale revision and 422 for anything the
//! session refuses.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tnet_core::codegen::CodegenError;
use tnet_core::optimizer::OptLevel;
use tnet_core::{NetworkState, UserAction};

use crate::script::ActionScript;
use crate::session::{codegen_code, DagView, Session, SessionError, SessionSettings, SessionStore, Slot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                current_revision: None,
            },
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::StaleRevision { .. } => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        if let SessionError::StaleRevision { current, .. } = e {
            err.body.current_revision = Some(current);
        }
        err
    }
}

impl From<CodegenError> for ApiError {
    fn from(e: CodegenError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, codegen_code(&e), e.to_string())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub revision: u64,
    pub opt_level: OptLevel,
    pub target: String,
    pub action_count: usize,
    pub state: NetworkState,
    pub code_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplyRequest {
    pub revision: u64,
    pub action: UserAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyResponse {
    pub revision: u64,
    pub state: NetworkState,
    pub code_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeResponse {
    pub revision: u64,
    pub opt_level: OptLevel,
    pub code_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagResponse {
    pub revision: u64,
    #[serde(flatten)]
    pub view: DagView,
}

#[derive(Debug, Deserialize)]
struct LevelQuery {
    opt: Option<OptLevel>,
}

type Store = Arc<SessionStore>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_request", e.to_string()))
}

fn lookup(store: &SessionStore, id: &str) -> Result<Arc<Slot>, ApiError> {
    store.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn view(id: String, session: &Session) -> Result<SessionView, ApiError> {
    Ok(SessionView {
        id,
        revision: session.revision(),
        opt_level: session.settings().opt_level,
        target: session.settings().target.clone(),
        action_count: session.log().len(),
        state: session.state().clone(),
        code_text: session.code(session.settings().opt_level)?,
    })
}

async fn create(State(store): State<Store>, body: Bytes) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let settings: SessionSettings = if body.iter().all(u8::is_ascii_whitespace) {
        SessionSettings::default()
    } else {
        parse_body(&body)?
    };
    let session = Session::new(settings)?;
    let (id, slot) = store.insert(session);
    let session = slot.session.read().unwrap();
    Ok((StatusCode::CREATED, Json(view(id, &session)?)))
}

async fn fetch(State(store): State<Store>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = lookup(&store, &id)?;
    let session = slot.session.read().unwrap();
    Ok(Json(view(id, &session)?))
}

async fn apply(
    State(store): State<Store>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ApplyResponse>, ApiError> {
    let slot = lookup(&store, &id)?;
    let request: ApplyRequest = parse_body(&body)?;
    let mut session = slot.session.write().unwrap();
    session.apply(request.revision, &request.action)?;
    Ok(Json(ApplyResponse {
        revision: session.revision(),
        state: session.state().clone(),
        code_text: session.code(session.settings().opt_level)?,
    }))
}

async fn code(
    State(store): State<Store>,
    Path(id): Path<String>,
    query: Result<Query<LevelQuery>, QueryRejection>,
) -> Result<Json<CodeResponse>, ApiError> {
    let slot = lookup(&store, &id)?;
    let Query(query) = query?;
    let session = slot.session.read().unwrap();
    let level = query.opt.unwrap_or(session.settings().opt_level);
    Ok(Json(CodeResponse {
        revision: session.revision(),
        opt_level: level,
        code_text: session.code(level)?,
    }))
}

async fn dag(
    State(store): State<Store>,
    Path(id): Path<String>,
    query: Result<Query<LevelQuery>, QueryRejection>,
) -> Result<Json<DagResponse>, ApiError> {
    let slot = lookup(&store, &id)?;
    let Query(query) = query?;
    let session = slot.session.read().unwrap();
    let level = query.opt.unwrap_or(session.settings().opt_level);
    Ok(Json(DagResponse {
        revision: session.revision(),
        view: session.dag(level),
    }))
}

async fn script(State(store): State<Store>, Path(id): Path<String>) -> Result<Json<ActionScript>, ApiError> {
    let slot = lookup(&store, &id)?;
    let session = slot.session.read().unwrap();
    Ok(Json(session.script()))
}

async fn delete(State(store): State<Store>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(&id))
    }
}

pub fn router(store: Store) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(fetch).delete(delete))
        .route("/sessions/{id}/actions", post(apply))
        .route("/sessions/{id}/code", get(code))
        .route("/sessions/{id}/dag", get(dag))
        .route("/sessions/{id}/script", get(script))
        .with_state(store)
}

/// Serves the API on `listener` and sweeps idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, store: Store) -> std::io::Result<()> {
    let sweeper = store.clone();
    let period = store.ttl().clamp(Duration::from_millis(10), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.evict_expired();
        }
    });
    axum::serve(listener, router(store)).await
}
