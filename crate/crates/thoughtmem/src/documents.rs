//! Document files for ingestion. A `.jsonl` file holds one
//! `{"doc_id", "text", "metadata"?}` object per line; any other file is read
//! as a single plain-text document whose id is the path as given.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;
use thoughtmem_core::Document;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("io failure on {path}: {source}")]
    IoFailure { path: String, source: io::Error },
    #[error("{path} line {line}: {reason}")]
    MalformedRecord { path: String, line: usize, reason: String },
}

/// Parses JSON Lines documents. Blank lines are skipped.
pub fn parse_document_lines(source: &str, input: &str) -> Result<Vec<Document>, DocumentError> {
    let mut docs = Vec::new();
    for (n, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| DocumentError::MalformedRecord {
            path: source.to_string(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_documents<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Document>, DocumentError> {
    let mut docs = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DocumentError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            docs.extend(parse_document_lines(&path.display().to_string(), &text)?);
        } else {
            docs.push(Document::new(path.display().to_string(), text));
        }
    }
    Ok(docs)
}
