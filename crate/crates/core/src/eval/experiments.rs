use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::report::{ExperimentReport, ReportRow};
use super::{metric, EvalCase, EvalError};
use crate::embedding::Embedder;
use crate::memory::MemoryStore;
use crate::metrics::{coverage, mean, rouge_l_f1, spearman};
use crate::pipeline::{Engine, PipelineConfig, PipelineError};

/// Probe queries ordered from most to least abstract, with their expert rank
/// (6 = most abstract).
pub const PROBE_QUERIES: [(&str, u32); 6] = [
    (
        "What are the broader future implications of user-centric utility in NLP model evaluation?",
        6,
    ),
    (
        "Please craft an abstract summarizing the key points from the provided text.",
        5,
    ),
    ("What are some of the limitations of this study?", 4),
    ("What are the key methods introduced in this paper?", 3),
    ("Please explain the term Minerva to me.", 2),
    (
        "How many benchmarks are used to test the model's long context understanding ability in this paper?",
        1,
    ),
];

fn mean_level(store: &MemoryStore, ids: &[crate::memory::ItemId]) -> Result<f64, PipelineError> {
    let mut levels = Vec::with_capacity(ids.len());
    for id in ids {
        levels.push(store.abstraction_level(id)?);
    }
    Ok(mean(&levels))
}

/// Answers every case against `store` without changing it, and scores the
/// answer with ROUGE-L and the retrieval with root-source coverage.
pub fn evaluate_cases(
    engine: &Engine<'_>,
    store: &MemoryStore,
    cases: &[&EvalCase],
    group: &str,
) -> Result<Vec<ReportRow>, EvalError> {
    let mut rows = Vec::with_capacity(cases.len());
    for case in cases {
        if case.gold_chunk_ids.is_empty() {
            return Err(EvalError::MissingGold(case.case_id.clone()));
        }
        let (retrieved, prompt) = engine.retrieve(store, &case.query())?;
        let answer = engine.lm.complete(&prompt)?;
        let ids = retrieved.ids();
        let cov = coverage(&ids, &case.gold_chunk_ids, store)?;
        let mut metrics = BTreeMap::new();
        metrics.insert(metric::ROUGE_L_F1.to_string(), rouge_l_f1(&answer, &case.label)?);
        metrics.insert(metric::PRECISION.to_string(), cov.precision);
        metrics.insert(metric::RECALL.to_string(), cov.recall);
        metrics.insert(metric::COVERAGE_F1.to_string(), cov.f1);
        metrics.insert(metric::MEAN_LEVEL.to_string(), mean_level(store, &ids)?);
        rows.push(ReportRow {
            group: group.to_string(),
            case_id: case.case_id.clone(),
            metrics,
        });
    }
    Ok(rows)
}

/// Evaluates `cases` on successive snapshots of `evolved`: all chunks plus
/// the first `b` thoughts by insertion order, for each budget `b`.
pub fn run_scaling_experiment(
    cases: &[EvalCase],
    evolved: &MemoryStore,
    engine: &Engine<'_>,
    thought_budgets: &[usize],
) -> Result<ExperimentReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::NoCases);
    }
    if thought_budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::BudgetsNotAscending);
    }
    let refs: Vec<&EvalCase> = cases.iter().collect();
    let mut rows = Vec::new();
    for &b in thought_budgets {
        let snapshot = evolved.with_thought_prefix(b);
        rows.extend(evaluate_cases(engine, &snapshot, &refs, &format!("budget={b}"))?);
    }
    let mut report = ExperimentReport::new("scaling", engine.config, rows);
    report
        .parameters
        .insert("thought_budgets".into(), Value::from(thought_budgets.to_vec()));
    report
        .parameters
        .insert("thoughts_available".into(), Value::from(evolved.thought_count()));
    if let (Some(first), Some(last)) = (report.aggregate.first(), report.aggregate.last()) {
        let gains: Vec<(String, f64)> = last
            .metrics
            .iter()
            .filter_map(|(k, v)| first.metrics.get(k).map(|f| (format!("gain.{k}"), v - f)))
            .collect();
        report.summary.extend(gains);
    }
    Ok(report)
}

/// A seeded partition of case indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub evolution: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and puts the first `floor(n * ratio)` indices
/// (at least 1, at most `n - 1`) in the evolution half.
pub fn split_cases(n: usize, split_ratio: f64, seed: u64) -> Result<Split, EvalError> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(EvalError::InvalidSplitRatio(split_ratio));
    }
    if n < 2 {
        return Err(EvalError::TooFewCases(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_evolution = libm::floor(n as f64 * split_ratio).clamp(1.0, (n - 1) as f64) as usize;
    let test = order.split_off(n_evolution);
    Ok(Split { evolution: order, test })
}

/// Builds thoughts from the evolution half of `cases`, then evaluates the
/// test half twice: on the chunks alone (`cold`) and with those thoughts
/// (`evolved`).
pub fn run_heldout_evolution(
    cases: &[EvalCase],
    split_ratio: f64,
    seed: u64,
    store: &MemoryStore,
    engine: &Engine<'_>,
) -> Result<ExperimentReport, EvalError> {
    let split = split_cases(cases.len(), split_ratio, seed)?;
    let cold = store.chunks_only();
    let mut evolved = cold.clone();
    let queries: Vec<String> = split.evolution.iter().map(|&i| cases[i].query()).collect();
    let session = engine.run_session(&mut evolved, &queries)?;

    let test: Vec<&EvalCase> = split.test.iter().map(|&i| &cases[i]).collect();
    let mut rows = evaluate_cases(engine, &cold, &test, "cold")?;
    rows.extend(evaluate_cases(engine, &evolved, &test, "evolved")?);

    let mut report = ExperimentReport::new("heldout", engine.config, rows);
    report.seed = Some(seed);
    let ids = |idx: &[usize]| Value::from(idx.iter().map(|&i| cases[i].case_id.clone()).collect::<Vec<_>>());
    report.parameters.insert("split_ratio".into(), Value::from(split_ratio));
    report
        .parameters
        .insert("evolution_cases".into(), ids(&split.evolution));
    report.parameters.insert("test_cases".into(), ids(&split.test));
    let accepted = session
        .records
        .iter()
        .filter(|r| matches!(r.thought_outcome, crate::pipeline::ThoughtOutcome::Accepted { .. }))
        .count();
    report
        .parameters
        .insert("thoughts_accepted".into(), Value::from(accepted));
    if let (Some(c), Some(e)) = (report.group("cold"), report.group("evolved")) {
        let deltas: Vec<(String, f64)> = e
            .metrics
            .iter()
            .filter_map(|(k, v)| c.metrics.get(k).map(|cv| (format!("delta.{k}"), v - cv)))
            .collect();
        report.summary.extend(deltas);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub query: String,
    pub rank: u32,
    pub mean_level: f64,
}

/// Mean abstraction level of each query's top-K retrieval. An empty store
/// yields no rows.
pub fn probe_levels<S: AsRef<str>, E: Embedder + ?Sized>(
    queries: &[(S, u32)],
    store: &MemoryStore,
    embedder: &E,
    config: &PipelineConfig,
) -> Result<Vec<ProbeRow>, EvalError> {
    config.validate().map_err(PipelineError::from)?;
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(queries.len());
    for (q, rank) in queries {
        let emb = embedder.embed(q.as_ref()).map_err(PipelineError::from)?;
        let ids: Vec<_> = store
            .retrieve_top_k(&emb, config.k)
            .map_err(PipelineError::from)?
            .into_iter()
            .map(|e| e.id)
            .collect();
        out.push(ProbeRow {
            query: q.as_ref().to_string(),
            rank: *rank,
            mean_level: mean_level(store, &ids)?,
        });
    }
    Ok(out)
}

/// [`probe_levels`] as a report, with the Spearman correlation between rank
/// and mean level in `summary["spearman"]` when it is defined.
pub fn run_abstraction_probe<S: AsRef<str>, E: Embedder + ?Sized>(
    queries: &[(S, u32)],
    store: &MemoryStore,
    embedder: &E,
    config: &PipelineConfig,
) -> Result<ExperimentReport, EvalError> {
    if store.thought_count() == 0 {
        return Err(EvalError::NoThoughtsInStore);
    }
    let probe = probe_levels(queries, store, embedder, config)?;
    let rows = probe
        .iter()
        .map(|p| ReportRow {
            group: "probe".into(),
            case_id: p.query.clone(),
            metrics: BTreeMap::from([
                (metric::RANK.to_string(), f64::from(p.rank)),
                (metric::MEAN_LEVEL.to_string(), p.mean_level),
            ]),
        })
        .collect();
    let mut report = ExperimentReport::new("probe", *config, rows);
    let ranks: Vec<f64> = probe.iter().map(|p| f64::from(p.rank)).collect();
    let levels: Vec<f64> = probe.iter().map(|p| p.mean_level).collect();
    if let Some(rho) = spearman(&ranks, &levels) {
        report.summary.insert("spearman".into(), rho);
    }
    Ok(report)
}
