//! Benchmark loading, synthetic scenarios, and experiment runners.

mod cases;
mod experiments;
mod report;
pub mod scenarios;

use alloc::string::String;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::lm::LmError;
use crate::metrics::MetricsError;
use crate::pipeline::{PipelineError, SessionError};

pub use cases::{
    attach_cases, cases_to_jsonl, citation_chunk_ids, parse_cases, CaseInputs, EvalCase, EvalKind, Paper,
    ABSTRACT_RETRIEVAL_PROMPT, MULTI_PAPER_COUNT, RELATED_RETRIEVAL_PROMPT,
};
pub use experiments::{
    evaluate_cases, probe_levels, run_abstraction_probe, run_heldout_evolution, run_scaling_experiment, split_cases,
    ProbeRow, Split, PROBE_QUERIES,
};
pub use report::{aggregate_rows, AggregateRow, ExperimentReport, ReportRow};

/// Metric keys used in report rows.
pub mod metric {
    pub const ROUGE_L_F1: &str = "rouge_l_f1";
    pub const PRECISION: &str = "precision";
    pub const RECALL: &str = "recall";
    pub const COVERAGE_F1: &str = "coverage_f1";
    pub const MEAN_LEVEL: &str = "mean_level";
    pub const RANK: &str = "rank";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown evaluation kind '{0}'")]
    UnknownKind(String),
    #[error("line {line}: missing field '{field}'")]
    MissingField { line: usize, field: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("need at least 2 cases, got {0}")]
    TooFewCases(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidSplitRatio(f64),
    #[error("thought budgets must be ascending")]
    BudgetsNotAscending,
    #[error("no cases to evaluate")]
    NoCases,
    #[error("case {0} has no gold chunks; attach it to a store first")]
    MissingGold(String),
    #[error("the store holds no thoughts")]
    NoThoughtsInStore,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl From<LmError> for EvalError {
    fn from(e: LmError) -> Self {
        EvalError::Pipeline(e.into())
    }
}

impl From<SessionError> for EvalError {
    fn from(e: SessionError) -> Self {
        EvalError::Pipeline(e.source)
    }
}
