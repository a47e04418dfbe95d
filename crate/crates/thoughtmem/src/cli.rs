//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thoughtmem_core::eval::{
    attach_cases, run_abstraction_probe, run_heldout_evolution, run_scaling_experiment, EvalKind, ExperimentReport,
    PROBE_QUERIES,
};
use thoughtmem_core::{ingest_documents, Engine, ItemId, MemoryStore, QueryRecord};

use crate::audit::{AuditLog, Tallies};
use crate::config::{LmBackend, RemoteEndpoint, ServiceConfig, SharedEmbedder, SharedModel};
use crate::service::AppState;
use crate::{documents, reports, store_file, SystemClock};

pub const DEFAULT_STORE: &str = "thoughtmem-store.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "thoughtmem",
    version,
    about = "Retrieval memory that grows validated thoughts from past queries"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML service configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store file (overrides the configuration).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Audit log (defaults to <store>.audit.jsonl).
    #[arg(long, global = true)]
    audit: Option<PathBuf>,
    /// Scripted language model fixture (JSON).
    #[arg(long, global = true, conflicts_with = "remote")]
    script: Option<PathBuf>,
    /// Use the remote chat-completion backend configured by THOUGHT_LLM_* variables.
    #[arg(long, global = true)]
    remote: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and store documents (.txt as one document, .jsonl as one per line).
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Answer one query and update memory.
    Query {
        text: String,
        /// Print the full query record as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Answer queries in order from a JSON Lines file of strings or {"query": ...} objects.
    Session { queries: PathBuf },
    /// Show an item with its root sources and abstraction level.
    Inspect { id: String },
    /// Item counts and thought outcome tallies.
    Stats,
    /// Run an experiment.
    Eval {
        #[command(subcommand)]
        experiment: EvalCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Score cases against growing prefixes of the stored thoughts.
    Scaling {
        cases: PathBuf,
        #[arg(long, default_value = "related-multi")]
        kind: String,
        /// Comma-separated ascending thought counts (default: five even steps).
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build thoughts from one part of the cases and score the rest cold and evolved.
    Heldout {
        cases: PathBuf,
        #[arg(long, default_value = "related-multi")]
        kind: String,
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean abstraction level retrieved per query, against the query's rank.
    Probe {
        /// JSON Lines of {"query": ..., "rank": ...}; defaults to the built-in six queries.
        queries: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A runtime failure, printed as `error: <name>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub name: &'static str,
    pub message: String,
}

impl CliError {
    fn new(name: &'static str, message: impl Into<String>) -> Self {
        Self {
            name,
            message: message.into(),
        }
    }
}

macro_rules! cli_error_from {
    ($($ty:ty => $name:expr),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($name, e.to_string())
            }
        })*
    };
}

cli_error_from! {
    crate::config::ConfigError => "ConfigError",
    crate::documents::DocumentError => "DocumentError",
    crate::audit::AuditError => "AuditError",
    crate::reports::ReportError => "ReportError",
    thoughtmem_core::corpus::CorpusError => "CorpusError",
    thoughtmem_core::pipeline::PipelineError => "PipelineError",
    thoughtmem_core::eval::EvalError => "EvalError",
    thoughtmem_core::memory::MemoryError => "MemoryError",
    std::io::Error => "IoFailure",
}

impl From<store_file::StoreFileError> for CliError {
    fn from(e: store_file::StoreFileError) -> Self {
        CliError::new(e.name(), e.to_string())
    }
}

struct Context {
    config: ServiceConfig,
    embedder: SharedEmbedder,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, CliError> {
        let mut config = match &g.config {
            Some(p) => ServiceConfig::load(p)?,
            None => ServiceConfig::new(DEFAULT_STORE),
        };
        if let Some(s) = &g.store {
            config.store_path = s.clone();
        }
        if let Some(a) = &g.audit {
            config.audit_path = Some(a.clone());
        }
        if let Some(script) = &g.script {
            config.lm = Some(LmBackend::Scripted { script: script.clone() });
        } else if g.remote {
            config.lm = Some(LmBackend::Remote(RemoteEndpoint::default()));
        }
        let embedder = config.build_embedder()?;
        Ok(Self { config, embedder })
    }

    fn model(&self) -> Result<SharedModel, CliError> {
        self.config.build_model()?.ok_or_else(|| {
            CliError::new(
                "NoLanguageModel",
                "no language model configured; pass --script, --remote, or an [lm] section in --config",
            )
        })
    }

    fn open_store(&self) -> Result<MemoryStore, CliError> {
        Ok(store_file::open_or_create(
            &self.config.store_path,
            self.embedder.dimension(),
        )?)
    }

    fn save_store(&self, store: &MemoryStore) -> Result<(), CliError> {
        Ok(store_file::persist(store, &self.config.store_path)?)
    }

    fn audit(&self) -> AuditLog {
        AuditLog::new(self.config.audit_path())
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("values always serialize"));
}

fn outcome_line(r: &QueryRecord) -> String {
    match &r.thought_outcome {
        thoughtmem_core::ThoughtOutcome::Accepted { item_id } => format!("thought: accepted as {item_id}"),
        other => format!("thought: {}", other.label()),
    }
}

fn warn_if_empty(store: &MemoryStore) {
    if store.is_empty() {
        eprintln!("warning: the store is empty; answers come from the query alone");
    }
}

fn read_queries(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new("IoFailure", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: String| CliError::new("MalformedRecord", format!("{} line {}: {why}", path.display(), n + 1));
        let q = match serde_json::from_str::<Value>(line).map_err(|e| bad(e.to_string()))? {
            Value::String(s) => s,
            Value::Object(m) => match m.get("query") {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(bad("object has no string 'query'".into())),
            },
            _ => return Err(bad("expected a string or an object with 'query'".into())),
        };
        out.push(q);
    }
    Ok(out)
}

fn read_probe_queries(path: &Path) -> Result<Vec<(String, u32)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new("IoFailure", format!("{}: {e}", path.display())))?;
    #[derive(serde::Deserialize)]
    struct Line {
        query: String,
        rank: u32,
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str::<Line>(l)
                .map(|x| (x.query, x.rank))
                .map_err(|e| CliError::new("MalformedRecord", format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

fn finish_report(mut report: ExperimentReport, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(dir) = out {
        for p in reports::write_report(&mut report, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    for agg in &report.aggregate {
        let metrics: Vec<String> = agg.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!("{} (n={}): {}", agg.group, agg.count, metrics.join(" "));
    }
    for (k, v) in &report.summary {
        println!("{k} = {v:.4}");
    }
    Ok(())
}

fn default_budgets(n: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..=4).map(|i| n * i / 4).collect();
    b.dedup();
    b
}

fn run_command(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(&cli.global)?;
    let config = ctx.config.pipeline;
    match cli.command {
        Command::Ingest { files } => {
            let docs = documents::load_documents(&files)?;
            let mut store = ctx.open_store()?;
            let report = ingest_documents(&docs, config.chunk_size_tokens, &mut store, &*ctx.embedder)?;
            ctx.save_store(&store)?;
            println!(
                "added {} chunks, skipped {} already stored",
                report.added, report.skipped
            );
        }
        Command::Query { text, json } => {
            let lm = ctx.model()?;
            let mut store = ctx.open_store()?;
            warn_if_empty(&store);
            let clock = SystemClock::new();
            let engine = Engine::new(&*lm, &*ctx.embedder, config).with_clock(&clock);
            let record = engine.process_query(&mut store, &text)?;
            ctx.save_store(&store)?;
            ctx.audit().append(std::slice::from_ref(&record))?;
            if json {
                print_json(&record);
            } else {
                println!("{}", record.answer_text);
                eprintln!("{}", outcome_line(&record));
            }
        }
        Command::Session { queries } => {
            let queries = read_queries(&queries)?;
            let lm = ctx.model()?;
            let mut store = ctx.open_store()?;
            warn_if_empty(&store);
            let clock = SystemClock::new();
            let engine = Engine::new(&*lm, &*ctx.embedder, config).with_clock(&clock);
            let audit = ctx.audit();
            match engine.run_session(&mut store, &queries) {
                Ok(out) => {
                    ctx.save_store(&store)?;
                    audit.append(&out.records)?;
                    for a in &out.answers {
                        println!("{}", serde_json::to_string(a).expect("strings serialize"));
                    }
                    let t = Tallies::from_records(&out.records);
                    eprintln!(
                        "{} queries: {} accepted, {} redundant, {} low confidence, {} without thought",
                        out.records.len(),
                        t.accepted,
                        t.rejected_redundant,
                        t.rejected_low_confidence,
                        t.no_thought
                    );
                }
                Err(e) => {
                    ctx.save_store(&store)?;
                    audit.append(&e.completed)?;
                    return Err(CliError::new("SessionError", e.to_string()));
                }
            }
        }
        Command::Inspect { id } => {
            let store = ctx.open_store()?;
            let item_id = ItemId::new(id);
            let item = store
                .get(&item_id)
                .ok_or_else(|| CliError::new("UnknownItem", format!("no item with id {item_id}")))?;
            let roots = store.root_source(&item_id)?;
            print_json(&json!({
                "id": item.id,
                "kind": item.kind(),
                "text": item.text(),
                "created_seq": item.created_seq,
                "immediate_sources": item.immediate_sources(),
                "root_source": roots,
                "abstraction_level": store.abstraction_level(&item_id)?,
            }));
        }
        Command::Stats => {
            let store = ctx.open_store()?;
            let t = ctx.audit().tallies()?;
            print_json(&json!({
                "chunks": store.chunk_count(),
                "thoughts": store.thought_count(),
                "edges": store.edge_count(),
                "accepted": t.accepted,
                "rejected_redundant": t.rejected_redundant,
                "rejected_low_confidence": t.rejected_low_confidence,
                "no_thought": t.no_thought,
            }));
        }
        Command::Eval { experiment } => match experiment {
            EvalCommand::Scaling {
                cases,
                kind,
                budgets,
                out,
            } => {
                let kind: EvalKind = kind.parse()?;
                let mut cases = reports::load_eval_cases(kind, &cases)?;
                let lm = ctx.model()?;
                let mut store = ctx.open_store()?;
                attach_cases(&mut cases, &mut store, &*ctx.embedder, &config)?;
                let budgets = budgets.unwrap_or_else(|| default_budgets(store.thought_count()));
                let engine = Engine::new(&*lm, &*ctx.embedder, config);
                finish_report(
                    run_scaling_experiment(&cases, &store, &engine, &budgets)?,
                    out.as_deref(),
                )?;
            }
            EvalCommand::Heldout {
                cases,
                kind,
                split,
                seed,
                out,
            } => {
                let kind: EvalKind = kind.parse()?;
                let mut cases = reports::load_eval_cases(kind, &cases)?;
                let lm = ctx.model()?;
                let mut store = ctx.open_store()?.chunks_only();
                attach_cases(&mut cases, &mut store, &*ctx.embedder, &config)?;
                let engine = Engine::new(&*lm, &*ctx.embedder, config);
                finish_report(
                    run_heldout_evolution(&cases, split, seed, &store, &engine)?,
                    out.as_deref(),
                )?;
            }
            EvalCommand::Probe { queries, out } => {
                let queries = match queries {
                    Some(p) => read_probe_queries(&p)?,
                    None => PROBE_QUERIES.iter().map(|(q, r)| (q.to_string(), *r)).collect(),
                };
                let store = ctx.open_store()?;
                let report = run_abstraction_probe(&queries, &store, &*ctx.embedder, &config)?;
                for row in &report.rows {
                    println!(
                        "rank {:.0}: mean level {:.4}  {}",
                        row.metrics["rank"], row.metrics["mean_level"], row.case_id
                    );
                }
                let defined = report.summary.contains_key("spearman");
                finish_report(report, out.as_deref())?;
                if !defined {
                    println!("spearman = undefined (a column is constant)");
                }
            }
        },
        Command::Serve { listen } => {
            ctx.config.check_store_writable()?;
            let lm = ctx.model()?;
            let store = ctx.open_store()?;
            let addr = listen.unwrap_or(ctx.config.listen);
            let state = Arc::new(AppState::new(
                store,
                lm,
                ctx.embedder.clone(),
                config,
                Some(ctx.config.store_path.clone()),
                Some(ctx.audit()),
            )?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                crate::service::serve(state.clone(), listener).await
            })?;
            drop(rt);
            drop(state);
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.name, e.message);
            2
        }
    }
}
