//! The per-query loop: retrieve from chunks and thoughts, answer, generate a
//! thought with a confidence flag, check it for redundancy, and store it only
//! when it is both confident and novel.
//!
//! A query runs in two phases. [`Engine::draft`] only reads the store and
//! makes the model calls; [`Engine::commit`] performs the redundancy check
//! and the insert together under `&mut`, so no other thought can land between
//! the check and the write.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::embedding::{Embedder, EmbeddingError};
use crate::lm::{
    parse_thought_response, render_answer_prompt, render_thought_prompt, LanguageModel, LmError, ThoughtCandidate,
};
use crate::memory::{ItemId, MemoryError, MemoryStore, RetrievedSet, Thought};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_EPSILON: f64 = 0.85;
pub const DEFAULT_CHUNK_SIZE_TOKENS: usize = 500;
pub const DEFAULT_CONTEXT_BUDGET_TOKENS: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub epsilon: f64,
    pub chunk_size_tokens: usize,
    pub context_budget_tokens: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            epsilon: DEFAULT_EPSILON,
            chunk_size_tokens: DEFAULT_CHUNK_SIZE_TOKENS,
            context_budget_tokens: DEFAULT_CONTEXT_BUDGET_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("epsilon must lie in (0, 1], got {0}")]
    EpsilonOutOfRange(f64),
    #[error("chunk size must be at least 1 token")]
    ZeroChunkSize,
    #[error("context budget must be at least 1 token")]
    ZeroBudget,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(ConfigError::EpsilonOutOfRange(self.epsilon));
        }
        if self.chunk_size_tokens == 0 {
            return Err(ConfigError::ZeroChunkSize);
        }
        if self.context_budget_tokens == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] LmError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Outcome of the redundancy check against every stored chunk and thought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyCheck {
    pub redundant: bool,
    /// Highest similarity found, or -1 for an empty store.
    pub max_similarity: f64,
    pub matched: Option<ItemId>,
}

/// Flags `candidate_text` as redundant when its similarity to any stored item
/// reaches `epsilon`.
pub fn redundancy_check<E: Embedder + ?Sized>(
    candidate_text: &str,
    store: &MemoryStore,
    embedder: &E,
    epsilon: f64,
) -> Result<RedundancyCheck, PipelineError> {
    let embedding = embedder.embed(candidate_text)?;
    Ok(check_embedding(&embedding, store, epsilon)?)
}

fn check_embedding(
    embedding: &crate::embedding::EmbeddingVector,
    store: &MemoryStore,
    epsilon: f64,
) -> Result<RedundancyCheck, MemoryError> {
    Ok(match store.max_similarity(embedding)? {
        None => RedundancyCheck {
            redundant: false,
            max_similarity: -1.0,
            matched: None,
        },
        Some((score, id)) => RedundancyCheck {
            redundant: score >= epsilon,
            max_similarity: score,
            matched: Some(id),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThoughtOutcome {
    Accepted { item_id: ItemId },
    RejectedLowConfidence,
    RejectedRedundant { max_similarity: f64, matched: ItemId },
    NoThought,
}

impl ThoughtOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            ThoughtOutcome::Accepted { .. } => "accepted",
            ThoughtOutcome::RejectedLowConfidence => "rejected_low_confidence",
            ThoughtOutcome::RejectedRedundant { .. } => "rejected_redundant",
            ThoughtOutcome::NoThought => "no_thought",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieve,
    Answer,
    Thought,
    Merge,
    Update,
}

/// Time source for stage timings. `now_micros` only needs to be monotone.
pub trait Clock {
    fn now_micros(&self) -> u64;
}

/// Reports zero for every stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_micros(&self) -> u64 {
        0
    }
}

/// Full trace of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub query_text: String,
    pub retrieved: RetrievedSet,
    pub answer_text: String,
    /// Candidate thought as parsed from the model, if one was produced.
    pub thought_text: Option<String>,
    pub confidence: Option<u8>,
    pub redundancy: Option<RedundancyCheck>,
    pub thought_outcome: ThoughtOutcome,
    /// Microseconds per stage.
    pub timings: BTreeMap<Stage, u64>,
}

/// Read-only half of a query: retrieval, the answer, and the thought
/// candidate, not yet checked against memory.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDraft {
    pub query_id: String,
    pub query_text: String,
    pub retrieved: RetrievedSet,
    pub answer_text: String,
    pub candidate: Option<ThoughtCandidate>,
    pub timings: BTreeMap<Stage, u64>,
}

/// Stable id for a query string.
pub fn query_id_for(query: &str) -> String {
    let mut id = String::from("q-");
    id.push_str(&sha256_hex(query.as_bytes())[..16]);
    id
}

/// Bundles the collaborators one query needs.
pub struct Engine<'a> {
    pub lm: &'a dyn LanguageModel,
    pub embedder: &'a dyn Embedder,
    pub config: PipelineConfig,
    pub clock: &'a dyn Clock,
}

/// Answers, the per-query trace, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub answers: Vec<String>,
    pub records: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("query {index} failed: {source}")]
pub struct SessionError {
    pub index: usize,
    pub source: PipelineError,
    /// Records of the queries that completed before the failure.
    pub completed: Vec<QueryRecord>,
}

impl<'a> Engine<'a> {
    pub fn new(lm: &'a dyn LanguageModel, embedder: &'a dyn Embedder, config: PipelineConfig) -> Self {
        Self {
            lm,
            embedder,
            config,
            clock: &NoClock,
        }
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    fn timed<T>(&self, timings: &mut BTreeMap<Stage, u64>, stage: Stage, f: impl FnOnce() -> T) -> T {
        let start = self.clock.now_micros();
        let out = f();
        timings.insert(stage, self.clock.now_micros().saturating_sub(start));
        out
    }

    /// Retrieves the top-K items and renders the answer prompt, without
    /// calling the model.
    pub fn retrieve(&self, store: &MemoryStore, query: &str) -> Result<(RetrievedSet, String), PipelineError> {
        self.config.validate()?;
        let embedding = self.embedder.embed(query)?;
        let entries = store.retrieve_top_k(&embedding, self.config.k)?;
        let texts: Vec<&str> = entries
            .iter()
            .map(|e| store.get(&e.id).expect("retrieved ids exist").text())
            .collect();
        let prompt = render_answer_prompt(query, &texts, self.config.context_budget_tokens);
        Ok((
            RetrievedSet {
                query_id: query_id_for(query),
                entries,
            },
            prompt,
        ))
    }

    /// Retrieval, answer generation, and thought generation. Reads the store
    /// only.
    pub fn draft(&self, store: &MemoryStore, query: &str) -> Result<QueryDraft, PipelineError> {
        let mut timings = BTreeMap::new();
        let (retrieved, prompt) = self.timed(&mut timings, Stage::Retrieve, || self.retrieve(store, query))?;
        let answer_text = self.timed(&mut timings, Stage::Answer, || self.lm.complete(&prompt))?;
        let candidate = match render_thought_prompt(query, &answer_text) {
            Ok(thought_prompt) => {
                let raw = self.timed(&mut timings, Stage::Thought, || self.lm.complete(&thought_prompt))?;
                Some(parse_thought_response(&raw)).filter(|c| !c.text.trim().is_empty())
            }
            Err(_) => None,
        };
        Ok(QueryDraft {
            query_id: retrieved.query_id.clone(),
            query_text: query.to_string(),
            retrieved,
            answer_text,
            candidate,
            timings,
        })
    }

    /// Redundancy check and memory update for a drafted query. The candidate
    /// is inserted only when its confidence is 1 and it is not redundant;
    /// its immediate sources are the whole retrieved set.
    pub fn commit(&self, store: &mut MemoryStore, draft: QueryDraft) -> Result<QueryRecord, PipelineError> {
        let QueryDraft {
            query_id,
            query_text,
            retrieved,
            answer_text,
            candidate,
            mut timings,
        } = draft;
        let mut record = QueryRecord {
            query_id,
            query_text,
            retrieved,
            answer_text,
            thought_text: candidate.as_ref().map(|c| c.text.clone()),
            confidence: candidate.as_ref().map(|c| c.confidence),
            redundancy: None,
            thought_outcome: ThoughtOutcome::NoThought,
            timings: BTreeMap::new(),
        };
        let Some(candidate) = candidate else {
            record.timings = timings;
            return Ok(record);
        };
        let embedding = match self.embedder.embed(&candidate.text) {
            Ok(e) => e,
            Err(EmbeddingError::EmptyText) => {
                record.timings = timings;
                return Ok(record);
            }
            Err(e) => return Err(e.into()),
        };
        let check = self.timed(&mut timings, Stage::Merge, || {
            check_embedding(&embedding, store, self.config.epsilon)
        })?;
        record.redundancy = Some(check.clone());
        record.thought_outcome = if candidate.confidence != 1 {
            ThoughtOutcome::RejectedLowConfidence
        } else if check.redundant {
            ThoughtOutcome::RejectedRedundant {
                max_similarity: check.max_similarity,
                matched: check.matched.expect("a redundant match names an item"),
            }
        } else if record.retrieved.is_empty() {
            // A thought needs at least one source to be traceable.
            ThoughtOutcome::NoThought
        } else {
            let thought = Thought {
                thought_id: ItemId::new(format!("t-{}", store.next_seq())),
                text: candidate.text,
                query_id: record.query_id.clone(),
                immediate_sources: record.retrieved.ids(),
            };
            let id = self.timed(&mut timings, Stage::Update, || store.insert_thought(thought, embedding))?;
            ThoughtOutcome::Accepted { item_id: id }
        };
        record.timings = timings;
        Ok(record)
    }

    /// One full pass of the loop for a single query.
    pub fn process_query(&self, store: &mut MemoryStore, query: &str) -> Result<QueryRecord, PipelineError> {
        let draft = self.draft(store, query)?;
        self.commit(store, draft)
    }

    /// Processes queries strictly in order, so thoughts accepted for one
    /// query are retrievable by the next. Stops at the first failure; thoughts
    /// accepted before it stay in the store.
    pub fn run_session<S: AsRef<str>>(
        &self,
        store: &mut MemoryStore,
        queries: &[S],
    ) -> Result<SessionOutput, SessionError> {
        let mut records = Vec::with_capacity(queries.len());
        for (index, query) in queries.iter().enumerate() {
            match self.process_query(store, query.as_ref()) {
                Ok(r) => records.push(r),
                Err(source) => {
                    return Err(SessionError {
                        index,
                        source,
                        completed: records,
                    })
                }
            }
        }
        Ok(SessionOutput {
            answers: records.iter().map(|r| r.answer_text.clone()).collect(),
            records,
        })
    }
}
