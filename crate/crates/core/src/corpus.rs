//! Document chunking and ingestion into the knowledge base.
//!
//! Documents are split into hard-cut windows of `chunk_size_tokens`
//! whitespace tokens with no overlap. A chunk's text is its tokens joined by
//! single spaces, and its id is the SHA-256 of that text, so identical text
//! always maps to the same chunk.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::embedding::{Embedder, EmbeddingError};
use crate::memory::{ItemId, MemoryError, MemoryStore};
use crate::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: u32,
    pub text: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("document {0} has no text")]
    EmptyDocument(String),
    #[error("chunk size must be at least one token")]
    ZeroChunkSize,
    #[error("document id {0} appears twice in one batch")]
    DuplicateDocId(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Content hash used as a chunk's id.
pub fn content_id(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

pub fn chunk_document(doc: &Document, chunk_size_tokens: usize) -> Result<Vec<DataChunk>, CorpusError> {
    if chunk_size_tokens == 0 {
        return Err(CorpusError::ZeroChunkSize);
    }
    let tokens: Vec<&str> = tokenize::tokens(&doc.text).collect();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }
    Ok(tokens
        .chunks(chunk_size_tokens)
        .enumerate()
        .map(|(ordinal, window)| {
            let text = window.join(" ");
            DataChunk {
                chunk_id: content_id(&text),
                doc_id: doc.doc_id.clone(),
                ordinal: ordinal as u32,
                token_count: window.len(),
                text,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub skipped: usize,
    /// Id of every produced chunk, in document then ordinal order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunk_ids: Vec<ItemId>,
}

/// Chunks every document, then embeds and inserts the chunks. All documents
/// are chunked before anything is inserted, so a bad document leaves the
/// store untouched.
pub fn ingest_documents<E: Embedder + ?Sized>(
    docs: &[Document],
    chunk_size_tokens: usize,
    store: &mut MemoryStore,
    embedder: &E,
) -> Result<IngestReport, CorpusError> {
    if store.is_closed() {
        return Err(MemoryError::StoreClosed.into());
    }
    let mut seen = BTreeSet::new();
    let mut chunks = Vec::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
        }
        chunks.extend(chunk_document(doc, chunk_size_tokens)?);
    }
    let mut report = IngestReport::default();
    for chunk in chunks {
        let id = ItemId::new(chunk.chunk_id.clone());
        report.chunk_ids.push(id.clone());
        if store.contains(&id) {
            report.skipped += 1;
            continue;
        }
        let embedding = embedder.embed(&chunk.text)?;
        store.insert_chunk(chunk, embedding)?;
        report.added += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedBowEmbedder;
    use alloc::format;
    use proptest::prelude::*;

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn twelve_hundred_tokens() {
        let doc = Document::new("d", words(1200, "w"));
        let chunks = chunk_document(&doc, 500).unwrap();
        let counts: Vec<usize> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(counts, [500, 500, 200]);
        let ordinals: Vec<u32> = chunks.iter().map(|c| c.ordinal).collect();
        assert_eq!(ordinals, [0, 1, 2]);
    }

    #[test]
    fn exact_budget_is_one_chunk() {
        let chunks = chunk_document(&Document::new("d", words(500, "w")), 500).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 500);
    }

    #[test]
    fn whitespace_only_is_rejected() {
        assert_eq!(
            chunk_document(&Document::new("d", " \n\t "), 500),
            Err(CorpusError::EmptyDocument("d".into()))
        );
        assert_eq!(
            chunk_document(&Document::new("d", "x"), 0),
            Err(CorpusError::ZeroChunkSize)
        );
    }

    #[test]
    fn ingest_counts() {
        let e = HashedBowEmbedder::default();
        let mut store = MemoryStore::new(256);
        let docs = [Document::new("a", words(500, "a")), Document::new("b", words(500, "b"))];
        let r = ingest_documents(&docs, 500, &mut store, &e).unwrap();
        assert_eq!((r.added, r.skipped), (2, 0));
        let again = ingest_documents(&docs, 500, &mut store, &e).unwrap();
        assert_eq!((again.added, again.skipped), (0, 2));
        assert_eq!(store.len(), 2);

        let mut store = MemoryStore::new(256);
        ingest_documents(&[Document::new("c", words(1200, "c"))], 500, &mut store, &e).unwrap();
        assert_eq!(store.chunk_count(), 3);
    }

    #[test]
    fn ingest_is_all_or_nothing_on_bad_docs() {
        let e = HashedBowEmbedder::default();
        let mut store = MemoryStore::new(256);
        let docs = [Document::new("a", "fine text"), Document::new("b", "   ")];
        assert!(matches!(
            ingest_documents(&docs, 500, &mut store, &e),
            Err(CorpusError::EmptyDocument(_))
        ));
        assert!(store.is_empty());
        let dup = [Document::new("a", "x"), Document::new("a", "y")];
        assert_eq!(
            ingest_documents(&dup, 500, &mut store, &e),
            Err(CorpusError::DuplicateDocId("a".into()))
        );
        store.close();
        assert_eq!(
            ingest_documents(&docs[..1], 500, &mut store, &e),
            Err(CorpusError::Memory(MemoryError::StoreClosed))
        );
    }

    proptest! {
        #[test]
        fn chunks_reconstruct_the_document(
            toks in proptest::collection::vec("[a-z]{1,6}", 1..200),
            seps in proptest::collection::vec(prop_oneof![Just(" "), Just("\n"), Just("  \t")], 200),
            size in 1usize..40,
        ) {
            let mut text = String::from(" ");
            for (t, s) in toks.iter().zip(&seps) {
                text.push_str(t);
                text.push_str(s);
            }
            let chunks = chunk_document(&Document::new("d", text), size).unwrap();
            let joined = chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(joined, toks.join(" "));
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.ordinal as usize, i);
                prop_assert_eq!(c.token_count, tokenize::count_tokens(&c.text));
                prop_assert!(c.token_count <= size);
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.token_count, size);
                }
                prop_assert_eq!(&c.chunk_id, &content_id(&c.text));
            }
        }

        #[test]
        fn content_addressing(a in "[a-c ]{1,8}", b in "[a-c ]{1,8}") {
            prop_assert_eq!(content_id(&a) == content_id(&b), a == b);
        }
    }
}
