//! Token unit shared by chunking, budgets, embeddings and ROUGE-L.
//!
//! A token is a maximal run of non-whitespace characters.

use alloc::string::String;
use alloc::vec::Vec;

pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn count_tokens(text: &str) -> usize {
    tokens(text).count()
}

/// Lowercased tokens, as used by the hashed embedder and ROUGE-L.
pub fn lowercase_tokens(text: &str) -> Vec<String> {
    tokens(text).map(str::to_lowercase).collect()
}
