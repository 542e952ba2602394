#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use talkplay_core::fixture::{generate_catalog, SyntheticCatalogConfig};
use talkplay_core::retrieval::{TokenIndex, WeightProfile};
use talkplay_core::tokenizer::Vocabulary;
use talkplay_core::Modality;
use talkplay_model::{init_params, ModelConfig, ModelRunner, RunnerConfig};
use talkplay_service::{router, AppState, Engine, SessionStore};
use tower::ServiceExt;

pub const N_TRACKS: usize = 48;

/// Small planted catalog tokenized by its true labels, with an untrained
/// model. Generation is random but fully seeded.
pub fn engine_with(weights: WeightProfile, unk_playlists: bool) -> Engine {
    let genres = 4;
    let fx = generate_catalog(&SyntheticCatalogConfig {
        n_tracks: N_TRACKS,
        n_genres: genres,
        n_playlists: 12,
        embed_dim: 4,
        seed: 5,
        ..Default::default()
    });
    let vocab = Vocabulary::byte_level(2 * genres as u32);
    let items = fx.labels.iter().map(|(id, l)| {
        let mut clusters = Modality::ALL.map(|m| Some(l.cluster(m)));
        if unk_playlists {
            clusters[0] = None;
        }
        (id.clone(), vocab.encode_item(clusters).unwrap())
    });
    let index = TokenIndex::build(vocab, items, &fx.catalog.popularity_map()).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.size() as usize,
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        context_len: 96,
        seed: 11,
    };
    let runner = ModelRunner::new(
        init_params(&cfg, None).unwrap(),
        vocab,
        RunnerConfig {
            max_response_bytes: 24,
            ..Default::default()
        },
    )
    .unwrap();
    Engine::new(runner, index, &fx.catalog, weights, 5, 3).unwrap()
}

pub fn app(store: Arc<dyn SessionStore>) -> Router {
    app_with(engine_with(WeightProfile::quadratic_coarse_to_fine(), false), store)
}

pub fn app_with(engine: Engine, store: Arc<dyn SessionStore>) -> Router {
    router(AppState::new(Arc::new(engine), store))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

pub async fn new_session(app: &Router, body: Option<Value>) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", body).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

pub async fn say(app: &Router, id: &str, body: Value) -> Value {
    let (status, v) = call(app, "POST", &format!("/v1/sessions/{id}/messages"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

pub fn top1(resp: &Value) -> String {
    resp["recommendations"][0]["track_id"].as_str().unwrap().to_string()
}
