//! Core of a self-evolving retrieval memory for LLM agents.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation over
//! in-memory values. File IO, HTTP backends, and the command line live in the
//! companion `thoughtmem` crate.
//!
//! The moving parts:
//!
//! - [`corpus`] splits documents into fixed-budget, content-addressed chunks.
//! - [`embedding`] defines the [`Embedder`](embedding::Embedder) contract, a
//!   deterministic hashed bag-of-words embedder, and cosine similarity.
//! - [`memory`] holds chunks and thoughts together with their provenance DAG,
//!   resolves root sources and abstraction levels, and answers top-K queries.
//! - [`lm`] renders prompts, parses thought/confidence replies, and provides a
//!   scripted [`LanguageModel`](lm::LanguageModel) for reproducible runs.
//! - [`pipeline`] runs the per-query loop: retrieve, answer, generate a thought,
//!   check redundancy, and update memory.
//! - [`metrics`] computes root-source coverage and ROUGE-L F1.
//! - [`eval`] loads benchmark records, builds synthetic scenarios, and runs the
//!   experiment protocols.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod lm;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod tokenize;

mod digest;

pub use corpus::{chunk_document, ingest_documents, DataChunk, Document, IngestReport};
pub use embedding::{cosine_similarity, hashed_bow_embed, Embedder, EmbeddingVector, HashedBowEmbedder};
pub use lm::{LanguageModel, LmError, ScriptedModel, ThoughtCandidate};
pub use memory::{ItemId, ItemKind, MemoryItem, MemoryStore, RetrievedEntry, RetrievedSet, Thought};
pub use pipeline::{Engine, PipelineConfig, QueryRecord, ThoughtOutcome};
