//! HTTP/JSON service over one store.
//!
//! Reads run concurrently. A mutation first claims the writer role with a
//! non-blocking lock and answers 409 if another mutation holds it. A query
//! drafts its answer and thought under a shared read lock and only claims the
//! writer role for the redundancy check and insert, so every mutation is the
//! same library call a direct caller would make. The store file is rewritten
//! after every mutation.

use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::Arc;
use thoughtmem_core::pipeline::{PipelineError, QueryDraft};
use thoughtmem_core::{
    ingest_documents, Engine, ItemId, ItemKind, LmError, MemoryStore, PipelineConfig, QueryRecord, RetrievedEntry,
};

use crate::audit::{AuditLog, Tallies};
use crate::config::{SharedEmbedder, SharedModel};
use crate::documents::parse_document_lines;
use crate::store_file;

pub struct AppState {
    store: RwLock<MemoryStore>,
    writer: Mutex<()>,
    tallies: Mutex<Tallies>,
    lm: SharedModel,
    embedder: SharedEmbedder,
    config: PipelineConfig,
    store_path: Option<PathBuf>,
    audit: Option<AuditLog>,
}

impl AppState {
    /// `store_path` and `audit`, when given, receive every mutation. Outcome
    /// counters start from the audit log's tallies.
    pub fn new(
        store: MemoryStore,
        lm: SharedModel,
        embedder: SharedEmbedder,
        config: PipelineConfig,
        store_path: Option<PathBuf>,
        audit: Option<AuditLog>,
    ) -> Result<Self, crate::audit::AuditError> {
        let tallies = match &audit {
            Some(a) => a.tallies()?,
            None => Tallies::default(),
        };
        Ok(Self {
            store: RwLock::new(store),
            writer: Mutex::new(()),
            tallies: Mutex::new(tallies),
            lm,
            embedder,
            config,
            store_path,
            audit,
        })
    }

    pub fn snapshot(&self) -> MemoryStore {
        self.read().clone()
    }

    pub fn tallies(&self) -> Tallies {
        *self.tallies.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, MemoryStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn engine(&self) -> Engine<'_> {
        Engine::new(&*self.lm, &*self.embedder, self.config)
    }

    fn claim_writer(&self) -> Result<MutexGuard<'_, ()>, ApiError> {
        match self.writer.try_lock() {
            Ok(g) => Ok(g),
            Err(TryLockError::Poisoned(p)) => Ok(p.into_inner()),
            Err(TryLockError::WouldBlock) => Err(ApiError::conflict()),
        }
    }

    fn persist(&self) -> Result<(), ApiError> {
        if let Some(path) = &self.store_path {
            store_file::persist(&self.read(), path).map_err(|e| ApiError::internal(e.name(), e.to_string()))?;
        }
        Ok(())
    }

    fn commit(&self, draft: QueryDraft) -> Result<QueryRecord, ApiError> {
        let _writer = self.claim_writer()?;
        let record = {
            let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
            self.engine().commit(&mut store, draft).map_err(ApiError::pipeline)?
        };
        self.persist()?;
        if let Some(audit) = &self.audit {
            audit
                .append(std::slice::from_ref(&record))
                .map_err(|e| ApiError::internal("AuditError", e.to_string()))?;
        }
        self.tallies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .count(&record.thought_outcome);
        Ok(record)
    }

    /// The query path: draft under a read lock, then commit as writer.
    pub fn query(&self, query: &str) -> Result<QueryRecord, ApiError> {
        let draft = {
            let store = self.read();
            self.engine().draft(&store, query).map_err(ApiError::pipeline)?
        };
        self.commit(draft)
    }

    pub fn ingest(&self, body: &str) -> Result<thoughtmem_core::IngestReport, ApiError> {
        let docs = parse_document_lines("request body", body).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let _writer = self.claim_writer()?;
        let report = {
            let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
            ingest_documents(&docs, self.config.chunk_size_tokens, &mut store, &*self.embedder).map_err(|e| {
                use thoughtmem_core::corpus::CorpusError;
                match e {
                    CorpusError::Embedding(inner) => ApiError::unavailable(inner.to_string()),
                    other => ApiError::bad_request(other.to_string()),
                }
            })?
        };
        if report.added > 0 {
            self.persist()?;
        }
        Ok(report)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "MalformedBody",
            message,
        }
    }

    fn not_found(id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            kind: "UnknownItem",
            message: format!("no item with id {id}"),
        }
    }

    fn conflict() -> Self {
        Self {
            status: StatusCode::CONFLICT,
            kind: "WriterConflict",
            message: "another mutation holds the writer role".into(),
        }
    }

    fn unavailable(message: String) -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            kind: "BackendUnavailable",
            message,
        }
    }

    fn internal(kind: &'static str, message: String) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind,
            message,
        }
    }

    fn pipeline(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(LmError::BackendUnavailable(m)) => Self::unavailable(m),
            PipelineError::Embedding(inner) => match inner {
                thoughtmem_core::embedding::EmbeddingError::EmptyText => {
                    Self::bad_request("query has no tokens".into())
                }
                thoughtmem_core::embedding::EmbeddingError::Backend(m) => Self::unavailable(m),
                other => Self::internal("EmbeddingError", other.to_string()),
            },
            other => Self::internal("PipelineError", other.to_string()),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "message": self.message}))).into_response()
    }
}

#[derive(Deserialize)]
struct QueryRequest {
    query: String,
}

#[derive(Serialize)]
struct RetrievedView {
    id: ItemId,
    score: f64,
    kind: ItemKind,
}

impl From<&RetrievedEntry> for RetrievedView {
    fn from(e: &RetrievedEntry) -> Self {
        Self {
            id: e.id.clone(),
            score: e.score,
            kind: e.kind,
        }
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::internal("TaskFailed", e.to_string())))
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: QueryRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query is empty".into()));
    }
    let record = blocking(move || state.query(&req.query)).await?;
    let item_id = match &record.thought_outcome {
        thoughtmem_core::ThoughtOutcome::Accepted { item_id } => Some(item_id.clone()),
        _ => None,
    };
    Ok(Json(json!({
        "query_id": record.query_id,
        "answer": record.answer_text,
        "retrieved": record.retrieved.entries.iter().map(RetrievedView::from).collect::<Vec<_>>(),
        "thought_outcome": record.thought_outcome.label(),
        "thought_id": item_id,
    })))
}

async fn ingest(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8".into()))?;
    let report = blocking(move || state.ingest(&text)).await?;
    Ok(Json(
        json!({"added": report.added, "skipped": report.skipped, "chunk_ids": report.chunk_ids}),
    ))
}

fn item_view(store: &MemoryStore, id: &ItemId) -> Option<Value> {
    let item = store.get(id)?;
    let mut v = json!({
        "id": item.id,
        "kind": item.kind(),
        "text": item.text(),
        "created_seq": item.created_seq,
        "immediate_sources": item.immediate_sources(),
    });
    if let Some(c) = item.as_chunk() {
        v["doc_id"] = json!(c.doc_id);
        v["ordinal"] = json!(c.ordinal);
    }
    if let Some(t) = item.as_thought() {
        v["query_id"] = json!(t.query_id);
    }
    Some(v)
}

async fn item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let store = state.read();
    item_view(&store, &ItemId::new(id.clone()))
        .map(Json)
        .ok_or_else(|| ApiError::not_found(&id))
}

async fn provenance(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let store = state.read();
    let item_id = ItemId::new(id.clone());
    let roots = store.root_source(&item_id).map_err(|_| ApiError::not_found(&id))?;
    let level = store
        .abstraction_level(&item_id)
        .map_err(|_| ApiError::not_found(&id))?;
    Ok(Json(
        json!({"id": item_id, "root_source": roots, "abstraction_level": level}),
    ))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Value> {
    let (chunks, thoughts) = {
        let store = state.read();
        (store.chunk_count(), store.thought_count())
    };
    let t = state.tallies();
    Json(json!({
        "chunks": chunks,
        "thoughts": thoughts,
        "accepted": t.accepted,
        "rejected_redundant": t.rejected_redundant,
        "rejected_low_confidence": t.rejected_low_confidence,
        "no_thought": t.no_thought,
    }))
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/query", post(query))
        .route("/v1/ingest", post(ingest))
        .route("/v1/items/{id}", get(item))
        .route("/v1/items/{id}/provenance", get(provenance))
        .route("/v1/stats", get(stats))
        .route("/v1/healthz", get(healthz))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
