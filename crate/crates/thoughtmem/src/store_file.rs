//! Store files on disk. Writes go to a temporary file in the same directory
//! and are renamed into place, so a crash never leaves a half-written store.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;
use thoughtmem_core::memory::{decode, encode, PersistError};
use thoughtmem_core::MemoryStore;

#[derive(Debug, Error)]
pub enum StoreFileError {
    #[error("io failure on {path}: {source}")]
    IoFailure { path: String, source: io::Error },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl StoreFileError {
    pub fn name(&self) -> &'static str {
        match self {
            StoreFileError::IoFailure { .. } => "IoFailure",
            StoreFileError::Persist(PersistError::FormatVersionMismatch { .. }) => "FormatVersionMismatch",
            StoreFileError::Persist(PersistError::CorruptFile(_)) => "CorruptFile",
            StoreFileError::Persist(PersistError::DimensionMismatch { .. }) => "DimensionMismatch",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreFileError + '_ {
    move |source| StoreFileError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

pub fn persist(store: &MemoryStore, path: &Path) -> Result<(), StoreFileError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(encode(store).as_bytes()).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn restore(path: &Path, dimension: usize) -> Result<MemoryStore, StoreFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(decode(&text, dimension)?)
}

/// Restores `path`, or returns an empty store if the file does not exist.
pub fn open_or_create(path: &Path, dimension: usize) -> Result<MemoryStore, StoreFileError> {
    if path.exists() {
        restore(path, dimension)
    } else {
        Ok(MemoryStore::new(dimension))
    }
}
