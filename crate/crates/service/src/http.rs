use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use talkplay_core::eval::MusicGenerator;

use crate::engine::Engine;
use crate::session::{CreateSessionRequest, MessageRequest};
use crate::store::SessionStore;
use crate::ServiceError;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    store: Arc<dyn SessionStore>,
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, store: Arc<dyn SessionStore>) -> Self {
        Self {
            engine,
            store,
            locks: Arc::default(),
        }
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/tracks/{id}", get(get_track))
        .with_state(state)
}

/// Empty bodies decode as the type's default.
fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn healthz(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model": st.engine.runner().fingerprint(),
        "tracks": st.engine.index().len(),
    }))
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let session = st.engine.create_session(&req)?;
    let id = session.session_id.clone();
    let store = st.store.clone();
    blocking(move || store.put(&session)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let store = st.store.clone();
    let lookup = id.clone();
    let session = blocking(move || store.get(&lookup))
        .await?
        .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))?;
    Ok(Json(st.engine.session_view(&session)).into_response())
}

async fn post_message(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: MessageRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))?;
    let lock = st.session_lock(&id);
    let _guard = lock.lock().await;
    let (engine, store) = (st.engine.clone(), st.store.clone());
    let response = blocking(move || {
        let mut session = store
            .get(&id)?
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))?;
        let response = engine.post_message(&mut session, &req)?;
        store.put(&session)?;
        Ok(response)
    })
    .await?;
    Ok(Json(response).into_response())
}

async fn get_track(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    st.engine
        .track_view(&id)
        .map(|t| Json(t).into_response())
        .ok_or_else(|| ServiceError::NotFound(format!("track {id}")))
}
