//! The knowledge base and thought memory, held as one store.
//!
//! Chunks and thoughts share an id space, a monotone insertion sequence, and a
//! provenance DAG whose edges run from each thought to its immediate sources.
//! Sources always predate the thought that cites them, so the graph is acyclic
//! by construction.

mod persist;
mod store;

pub use persist::{decode, encode, PersistError, FORMAT_VERSION};
pub use store::MemoryStore;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DataChunk;
use crate::embedding::EmbeddingVector;

/// Identifier of a memory item. Chunks use their content hash; thoughts use
/// whatever id the caller assigns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Chunk,
    Thought,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Chunk => "chunk",
            ItemKind::Thought => "thought",
        }
    }
}

/// A query-derived abstraction together with the items it was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub thought_id: ItemId,
    pub text: String,
    pub query_id: String,
    pub immediate_sources: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Chunk(DataChunk),
    Thought(Thought),
}

impl Payload {
    pub fn text(&self) -> &str {
        match self {
            Payload::Chunk(c) => &c.text,
            Payload::Thought(t) => &t.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub id: ItemId,
    pub payload: Payload,
    pub embedding: EmbeddingVector,
    pub created_seq: u64,
    level: f64,
    sources: Vec<usize>,
}

impl MemoryItem {
    pub fn kind(&self) -> ItemKind {
        match self.payload {
            Payload::Chunk(_) => ItemKind::Chunk,
            Payload::Thought(_) => ItemKind::Thought,
        }
    }

    pub fn text(&self) -> &str {
        self.payload.text()
    }

    /// Immediate sources; empty for chunks.
    pub fn immediate_sources(&self) -> &[ItemId] {
        match &self.payload {
            Payload::Chunk(_) => &[],
            Payload::Thought(t) => &t.immediate_sources,
        }
    }

    pub fn as_chunk(&self) -> Option<&DataChunk> {
        match &self.payload {
            Payload::Chunk(c) => Some(c),
            Payload::Thought(_) => None,
        }
    }

    pub fn as_thought(&self) -> Option<&Thought> {
        match &self.payload {
            Payload::Thought(t) => Some(t),
            Payload::Chunk(_) => None,
        }
    }
}

/// One ranked hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub id: ItemId,
    pub score: f64,
    pub kind: ItemKind,
}

/// Top-K result for one query, descending by score; ties go to the older item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub query_id: String,
    pub entries: Vec<RetrievedEntry>,
}

impl RetrievedSet {
    pub fn ids(&self) -> Vec<ItemId> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("dimension mismatch: store has {expected}, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("store is closed for writing")]
    StoreClosed,
    #[error("unknown source item {0}")]
    UnknownSource(ItemId),
    #[error("thought has no immediate sources")]
    EmptySourceList,
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("item id {0} already exists")]
    DuplicateId(ItemId),
    #[error("item text is empty")]
    EmptyText,
}
