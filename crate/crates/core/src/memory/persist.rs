//! Line-oriented persistence format.
//!
//! ```text
//! {"format_version":1,"embed_dim":256,"item_count":3,"checksum":"<sha256 hex>"}
//! {"id":"…","kind":"chunk","text":"…","doc_id":"…","ordinal":0,"created_seq":0,"embedding":[…]}
//! {"id":"…","kind":"thought","text":"…","query_id":"…","immediate_sources":["…"],"created_seq":1,"embedding":[…]}
//! ```
//!
//! The checksum covers the item lines exactly as written, each including its
//! trailing newline.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ItemId, ItemKind, MemoryError, MemoryStore, Payload, Thought};
use crate::corpus::{content_id, DataChunk};
use crate::digest::sha256_hex;
use crate::embedding::EmbeddingVector;
use crate::tokenize::count_tokens;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PersistError {
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    FormatVersionMismatch { found: u64 },
    #[error("corrupt store file: {0}")]
    CorruptFile(String),
    #[error("dimension mismatch: file has {file}, embedder has {embedder}")]
    DimensionMismatch { file: usize, embedder: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u64,
    embed_dim: usize,
    item_count: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    id: ItemId,
    kind: ItemKind,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ordinal: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    immediate_sources: Option<Vec<ItemId>>,
    created_seq: u64,
    embedding: Vec<f64>,
}

/// Serializes the store. Equal stores encode to identical bytes.
pub fn encode(store: &MemoryStore) -> String {
    let mut body = String::new();
    for item in store.items() {
        let record = match &item.payload {
            Payload::Chunk(c) => ItemRecord {
                id: item.id.clone(),
                kind: ItemKind::Chunk,
                text: c.text.clone(),
                doc_id: Some(c.doc_id.clone()),
                ordinal: Some(c.ordinal),
                query_id: None,
                immediate_sources: None,
                created_seq: item.created_seq,
                embedding: item.embedding.as_slice().to_vec(),
            },
            Payload::Thought(t) => ItemRecord {
                id: item.id.clone(),
                kind: ItemKind::Thought,
                text: t.text.clone(),
                doc_id: None,
                ordinal: None,
                query_id: Some(t.query_id.clone()),
                immediate_sources: Some(t.immediate_sources.clone()),
                created_seq: item.created_seq,
                embedding: item.embedding.as_slice().to_vec(),
            },
        };
        body.push_str(&serde_json::to_string(&record).expect("item records always serialize"));
        body.push('\n');
    }
    let header = Header {
        format_version: u64::from(FORMAT_VERSION),
        embed_dim: store.dimension(),
        item_count: store.len(),
        checksum: sha256_hex(body.as_bytes()),
    };
    let mut out = serde_json::to_string(&header).expect("header always serializes");
    out.push('\n');
    out.push_str(&body);
    out
}

fn corrupt(msg: impl Into<String>) -> PersistError {
    PersistError::CorruptFile(msg.into())
}

/// Parses a store, validating version, checksum, dimension, and provenance.
pub fn decode(input: &str, expected_dimension: usize) -> Result<MemoryStore, PersistError> {
    let (header_line, body) = match input.find('\n') {
        Some(i) => (&input[..i], &input[i + 1..]),
        None => (input, ""),
    };
    let header: Header = serde_json::from_str(header_line).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.format_version != u64::from(FORMAT_VERSION) {
        return Err(PersistError::FormatVersionMismatch {
            found: header.format_version,
        });
    }
    if sha256_hex(body.as_bytes()) != header.checksum {
        return Err(corrupt("checksum mismatch"));
    }
    if header.embed_dim != expected_dimension {
        return Err(PersistError::DimensionMismatch {
            file: header.embed_dim,
            embedder: expected_dimension,
        });
    }

    let mut store = MemoryStore::new(header.embed_dim);
    let mut count = 0usize;
    for (n, line) in body.lines().enumerate() {
        let line_no = n + 2;
        let record: ItemRecord = serde_json::from_str(line).map_err(|e| corrupt(format!("line {line_no}: {e}")))?;
        if !store.is_empty() && record.created_seq < store.next_seq() {
            return Err(corrupt(format!("line {line_no}: created_seq is not increasing")));
        }
        if record.embedding.len() != header.embed_dim {
            return Err(corrupt(format!(
                "line {line_no}: embedding has {} values",
                record.embedding.len()
            )));
        }
        let embedding =
            EmbeddingVector::from_unit(record.embedding).map_err(|e| corrupt(format!("line {line_no}: {e}")))?;
        let inserted = match record.kind {
            ItemKind::Chunk => {
                let doc_id = record
                    .doc_id
                    .ok_or_else(|| corrupt(format!("line {line_no}: chunk without doc_id")))?;
                let ordinal = record
                    .ordinal
                    .ok_or_else(|| corrupt(format!("line {line_no}: chunk without ordinal")))?;
                if content_id(&record.text) != record.id.as_str() {
                    return Err(corrupt(format!("line {line_no}: chunk id does not match its text")));
                }
                let chunk = DataChunk {
                    chunk_id: record.id.as_str().to_string(),
                    doc_id,
                    ordinal,
                    token_count: count_tokens(&record.text),
                    text: record.text,
                };
                store.insert_chunk_at(chunk, embedding, record.created_seq)
            }
            ItemKind::Thought => {
                let thought = Thought {
                    thought_id: record.id,
                    text: record.text,
                    query_id: record
                        .query_id
                        .ok_or_else(|| corrupt(format!("line {line_no}: thought without query_id")))?,
                    immediate_sources: record
                        .immediate_sources
                        .ok_or_else(|| corrupt(format!("line {line_no}: thought without sources")))?,
                };
                store.insert_thought_at(thought, embedding, record.created_seq)
            }
        };
        inserted.map_err(|e: MemoryError| corrupt(format!("line {line_no}: {e}")))?;
        count += 1;
    }
    if count != header.item_count {
        return Err(corrupt(format!(
            "header lists {} items, found {count}",
            header.item_count
        )));
    }
    Ok(store)
}
