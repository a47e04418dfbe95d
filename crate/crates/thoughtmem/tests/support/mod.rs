//! Scripted sessions and HTTP helpers shared by the integration targets.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use thoughtmem::audit::AuditLog;
use thoughtmem::config::{SharedEmbedder, SharedModel};
use thoughtmem::service::{router, AppState};
use thoughtmem::store_file;
use thoughtmem_core::{
    ingest_documents, Document, Engine, HashedBowEmbedder, MemoryStore, PipelineConfig, ScriptedModel,
};
use tower::ServiceExt;

const TOPICS: [&str; 6] = ["glacier", "tundra", "monsoon", "estuary", "canyon", "savanna"];

pub fn session_docs() -> Vec<Document> {
    TOPICS
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let body: Vec<String> = (0..12).map(|j| format!("{t}{j}")).collect();
            Document::new(format!("doc-{i}"), format!("{t} {}", body.join(" ")))
        })
        .collect()
}

pub fn session_docs_jsonl() -> String {
    session_docs()
        .iter()
        .map(|d| serde_json::to_string(d).unwrap() + "\n")
        .collect()
}

/// `n` queries cycling over the topics. Each query gets a confident novel
/// thought, a low-confidence thought, or (on repeats) re-emits an earlier
/// thought so the redundancy gate fires. Every fifth query has no rule and
/// falls back to the default reply.
pub fn scripted_session(n: usize) -> (ScriptedModel, Vec<String>) {
    let mut lm = ScriptedModel::new();
    let mut queries = Vec::new();
    for i in 0..n {
        let t = TOPICS[i % TOPICS.len()];
        let u = TOPICS[(i + 1) % TOPICS.len()];
        let round = i / TOPICS.len();
        let q = format!("what links {t} and {u} round {round}");
        if i % 5 != 4 {
            lm = lm.answer(q.clone(), format!("{t} relates to {u}"));
            match i % 3 {
                0 => lm = lm.thought(q.clone(), 1, &format!("{t} {u} {t}0 {u}0 insight")),
                1 => lm = lm.thought(q.clone(), 0, &format!("{t} guess")),
                _ => lm = lm.thought(q.clone(), 1, &format!("{} {t}1 {u}1 merged", round % 2)),
            }
        }
        queries.push(q);
    }
    (lm, queries)
}

pub fn engine_config() -> PipelineConfig {
    PipelineConfig {
        k: 4,
        chunk_size_tokens: 5,
        ..PipelineConfig::default()
    }
}

/// Library path: ingest then run the session, returning the persisted bytes.
pub fn library_run(n: usize, path: &Path) -> Vec<u8> {
    let e = HashedBowEmbedder::default();
    let config = engine_config();
    let (lm, queries) = scripted_session(n);
    let mut store = MemoryStore::new(256);
    ingest_documents(&session_docs(), config.chunk_size_tokens, &mut store, &e).unwrap();
    Engine::new(&lm, &e, config).run_session(&mut store, &queries).unwrap();
    store_file::persist(&store, path).unwrap();
    std::fs::read(path).unwrap()
}

pub fn state(store: MemoryStore, lm: SharedModel, store_path: Option<&Path>, audit: Option<AuditLog>) -> Arc<AppState> {
    let embedder: SharedEmbedder = Arc::new(HashedBowEmbedder::default());
    Arc::new(
        AppState::new(
            store,
            lm,
            embedder,
            engine_config(),
            store_path.map(Path::to_path_buf),
            audit,
        )
        .unwrap(),
    )
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub fn query_body(q: &str) -> String {
    serde_json::json!({ "query": q }).to_string()
}

/// HTTP path: the same ingest and session through the router, returning the
/// bytes the service persisted.
pub async fn http_run(n: usize, path: &Path) -> Vec<u8> {
    let (lm, queries) = scripted_session(n);
    let app = router(state(MemoryStore::new(256), Arc::new(lm), Some(path), None));
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(session_docs_jsonl())).await;
    assert_eq!(status, StatusCode::OK);
    for q in &queries {
        let (status, body) = call(&app, "POST", "/v1/query", Some(query_body(q))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    std::fs::read(path).unwrap()
}
