//! HTTP chat service: sessions, message posting (generation, retrieval,
//! response) and catalog lookup.
//!
//! Routes:
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | optional `{seed?, sampling?}` | `{session_id}` |
//! | POST | `/v1/sessions/{id}/messages` | `{text, feedback?}` | [`ChatResponse`] |
//! | GET | `/v1/sessions/{id}` | | [`SessionView`] |
//! | GET | `/v1/tracks/{id}` | | [`TrackView`] |
//! | GET | `/healthz` | | `{status, model, tracks}` |
//!
//! `feedback` is `accept`, `reject` or `none`. Errors reply
//! `{"error": "..."}` with status 400, 404 or 500.

mod config;
mod engine;
mod http;
mod session;
mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::{ServiceConfig, ENV_PREFIX};
pub use engine::Engine;
pub use http::{router, AppState};
pub use session::{
    ChatResponse, CreateSessionRequest, Feedback, MessageRequest, Recommendation, SamplingOverrides, Session,
    SessionView, TrackView, TurnView,
};
pub use store::{is_valid_session_id, FileStore, MemoryStore, SessionStore};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("session store: {0}")]
    Store(String),
    #[error("internal: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Store selected by the config: files under `store_dir`, else memory.
pub fn open_store(cfg: &ServiceConfig) -> Result<Arc<dyn SessionStore>, ServiceError> {
    Ok(match &cfg.store_dir {
        Some(dir) => Arc::new(FileStore::open(dir)?),
        None => Arc::new(MemoryStore::new()),
    })
}

/// Loads everything named by `cfg` and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let engine = Arc::new(tokio::task::spawn_blocking({
        let cfg = cfg.clone();
        move || Engine::from_config(&cfg)
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??);
    let app = router(AppState::new(engine, open_store(&cfg)?));
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| ServiceError::Config(format!("listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
