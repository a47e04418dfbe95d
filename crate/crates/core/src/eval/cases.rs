//! Benchmark records: one JSON object per line, keyed by the dataset's own
//! attribute names.
//!
//! | kind            | fields                                                                      |
//! |-----------------|-----------------------------------------------------------------------------|
//! | abstract-single | `title`, `abstract` (label), `main_content`                                 |
//! | abstract-multi  | `title i`, `abstract i` (optional), `main_content i` for i in 1..=5, `label` |
//! | related-multi   | `title`, `own abstract`, `own related work` (label), `citations' abstracts`, `other random abstracts` |
//!
//! Unknown fields are kept so a loaded case re-serializes to its input.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::EvalError;
use crate::corpus::{chunk_document, content_id, ingest_documents, Document, IngestReport};
use crate::embedding::Embedder;
use crate::memory::{ItemId, MemoryStore};
use crate::metrics::rouge_l_f1;
use crate::pipeline::PipelineConfig;

/// Retrieval prompt for both abstract tasks.
pub const ABSTRACT_RETRIEVAL_PROMPT: &str =
    "Please craft an abstract summarizing the key points from the provided text. \
The abstract should be of appropriate length and include the main theme, significant findings or arguments, and \
conclusions of the text. Ensure it captures the essence of the content in a clear, succinct manner";

/// Retrieval prompt for the related-work task; the abstract is appended.
pub const RELATED_RETRIEVAL_PROMPT: &str =
    "Could you please write a related work for introducing this paper? Its abstract is: ";

pub const MULTI_PAPER_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalKind {
    AbstractSingle,
    AbstractMulti,
    RelatedMulti,
}

impl EvalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalKind::AbstractSingle => "abstract-single",
            EvalKind::AbstractMulti => "abstract-multi",
            EvalKind::RelatedMulti => "related-multi",
        }
    }
}

impl fmt::Display for EvalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abstract-single" => Ok(EvalKind::AbstractSingle),
            "abstract-multi" => Ok(EvalKind::AbstractMulti),
            "related-multi" => Ok(EvalKind::RelatedMulti),
            other => Err(EvalError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paper {
    pub title: String,
    pub abstract_text: Option<String>,
    pub main_content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaseInputs {
    AbstractSingle {
        title: String,
        main_content: String,
    },
    AbstractMulti {
        papers: Vec<Paper>,
    },
    RelatedMulti {
        title: String,
        own_abstract: String,
        citation_abstracts: Vec<String>,
        random_abstracts: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub case_id: String,
    pub kind: EvalKind,
    pub inputs: CaseInputs,
    pub label: String,
    /// Filled in by [`attach_cases`].
    pub gold_chunk_ids: BTreeSet<ItemId>,
    extra: Map<String, Value>,
}

const SINGLE_FIELDS: [&str; 3] = ["title", "abstract", "main_content"];
const RELATED_FIELDS: [&str; 5] = [
    "title",
    "own abstract",
    "own related work",
    "citations' abstracts",
    "other random abstracts",
];

fn numbered(field: &str, i: usize) -> String {
    format!("{field} {i}")
}

struct Record<'a> {
    line: usize,
    map: &'a Map<String, Value>,
}

impl Record<'_> {
    fn string(&self, field: &str) -> Result<String, EvalError> {
        match self.map.get(field) {
            None | Some(Value::Null) => Err(EvalError::MissingField {
                line: self.line,
                field: field.to_string(),
            }),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(EvalError::MalformedRecord {
                line: self.line,
                reason: format!("field '{field}' is empty"),
            }),
            Some(_) => Err(EvalError::MalformedRecord {
                line: self.line,
                reason: format!("field '{field}' must be a string"),
            }),
        }
    }

    fn optional_string(&self, field: &str) -> Result<Option<String>, EvalError> {
        match self.map.get(field) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(EvalError::MalformedRecord {
                line: self.line,
                reason: format!("field '{field}' must be a string"),
            }),
        }
    }

    fn strings(&self, field: &str) -> Result<Vec<String>, EvalError> {
        let Some(value) = self.map.get(field) else {
            return Err(EvalError::MissingField {
                line: self.line,
                field: field.to_string(),
            });
        };
        let bad = || EvalError::MalformedRecord {
            line: self.line,
            reason: format!("field '{field}' must be an array of strings"),
        };
        value
            .as_array()
            .ok_or_else(bad)?
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(bad))
            .collect()
    }
}

impl EvalCase {
    /// Validates one parsed record. `line` is 1-based and used in errors and
    /// as the fallback case id.
    pub fn from_record(kind: EvalKind, line: usize, map: &Map<String, Value>) -> Result<Self, EvalError> {
        let r = Record { line, map };
        let mut known: Vec<String> = Vec::new();
        let (inputs, label) = match kind {
            EvalKind::AbstractSingle => {
                known.extend(SINGLE_FIELDS.iter().map(|s| s.to_string()));
                let title = r.string("title")?;
                let label = r.string("abstract")?;
                let main_content = r.string("main_content")?;
                (CaseInputs::AbstractSingle { title, main_content }, label)
            }
            EvalKind::AbstractMulti => {
                let mut papers = Vec::with_capacity(MULTI_PAPER_COUNT);
                for i in 1..=MULTI_PAPER_COUNT {
                    let (t, a, m) = (
                        numbered("title", i),
                        numbered("abstract", i),
                        numbered("main_content", i),
                    );
                    papers.push(Paper {
                        title: r.string(&t)?,
                        abstract_text: r.optional_string(&a)?,
                        main_content: r.string(&m)?,
                    });
                    known.extend([t, a, m]);
                }
                known.push("label".to_string());
                (CaseInputs::AbstractMulti { papers }, r.string("label")?)
            }
            EvalKind::RelatedMulti => {
                known.extend(RELATED_FIELDS.iter().map(|s| s.to_string()));
                let title = r.string("title")?;
                let own_abstract = r.string("own abstract")?;
                let label = r.string("own related work")?;
                let citation_abstracts = r.strings("citations' abstracts")?;
                let random_abstracts = r.strings("other random abstracts")?;
                if citation_abstracts.iter().all(|a| a.trim().is_empty()) {
                    return Err(EvalError::MalformedRecord {
                        line,
                        reason: "field 'citations' abstracts' has no text".into(),
                    });
                }
                (
                    CaseInputs::RelatedMulti {
                        title,
                        own_abstract,
                        citation_abstracts,
                        random_abstracts,
                    },
                    label,
                )
            }
        };
        let extra: Map<String, Value> = map
            .iter()
            .filter(|(k, _)| !known.iter().any(|f| f == *k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let case_id = match map.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("{}-{line}", kind.as_str()),
        };
        Ok(Self {
            case_id,
            kind,
            inputs,
            label,
            gold_chunk_ids: BTreeSet::new(),
            extra,
        })
    }

    /// The case as a JSON object with its original field names.
    pub fn to_record(&self) -> Map<String, Value> {
        let mut m = self.extra.clone();
        let s = |v: &str| Value::String(v.to_string());
        match &self.inputs {
            CaseInputs::AbstractSingle { title, main_content } => {
                m.insert("title".into(), s(title));
                m.insert("abstract".into(), s(&self.label));
                m.insert("main_content".into(), s(main_content));
            }
            CaseInputs::AbstractMulti { papers } => {
                for (i, p) in papers.iter().enumerate() {
                    m.insert(numbered("title", i + 1), s(&p.title));
                    if let Some(a) = &p.abstract_text {
                        m.insert(numbered("abstract", i + 1), s(a));
                    }
                    m.insert(numbered("main_content", i + 1), s(&p.main_content));
                }
                m.insert("label".into(), s(&self.label));
            }
            CaseInputs::RelatedMulti {
                title,
                own_abstract,
                citation_abstracts,
                random_abstracts,
            } => {
                let arr = |v: &[String]| Value::Array(v.iter().map(|x| s(x)).collect());
                m.insert("title".into(), s(title));
                m.insert("own abstract".into(), s(own_abstract));
                m.insert("own related work".into(), s(&self.label));
                m.insert("citations' abstracts".into(), arr(citation_abstracts));
                m.insert("other random abstracts".into(), arr(random_abstracts));
            }
        }
        m
    }

    /// One JSON line with keys in sorted order.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&Value::Object(self.to_record())).expect("records always serialize")
    }

    /// Query used to retrieve for this case.
    pub fn query(&self) -> String {
        match &self.inputs {
            CaseInputs::AbstractSingle { title, .. } => format!("{ABSTRACT_RETRIEVAL_PROMPT} Title: {title}"),
            CaseInputs::AbstractMulti { papers } => {
                let titles: Vec<&str> = papers.iter().map(|p| p.title.as_str()).collect();
                format!("{ABSTRACT_RETRIEVAL_PROMPT} Titles: {}", titles.join("; "))
            }
            CaseInputs::RelatedMulti { own_abstract, .. } => format!("{RELATED_RETRIEVAL_PROMPT}{own_abstract}"),
        }
    }

    /// Documents this case contributes to memory, and whether each one holds
    /// gold material. For the related-work task only the citation abstracts
    /// are gold; the random abstracts are distractors.
    pub fn documents(&self) -> Vec<(Document, bool)> {
        let id = &self.case_id;
        match &self.inputs {
            CaseInputs::AbstractSingle { main_content, .. } => {
                alloc::vec![(Document::new(format!("{id}/main_content"), main_content.clone()), true)]
            }
            CaseInputs::AbstractMulti { papers } => papers
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    (
                        Document::new(format!("{id}/main_content {}", i + 1), p.main_content.clone()),
                        true,
                    )
                })
                .collect(),
            CaseInputs::RelatedMulti {
                citation_abstracts,
                random_abstracts,
                ..
            } => {
                let mut docs = Vec::new();
                for (i, a) in citation_abstracts
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| !a.trim().is_empty())
                {
                    docs.push((Document::new(format!("{id}/citation {}", i + 1), a.clone()), true));
                }
                for (i, a) in random_abstracts
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| !a.trim().is_empty())
                {
                    docs.push((Document::new(format!("{id}/random {}", i + 1), a.clone()), false));
                }
                docs
            }
        }
    }
}

/// Parses a JSON Lines case file. Blank lines are skipped.
pub fn parse_cases(kind: EvalKind, input: &str) -> Result<Vec<EvalCase>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| EvalError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(EvalError::MalformedRecord {
                line: line_no,
                reason: "record is not a JSON object".into(),
            });
        };
        out.push(EvalCase::from_record(kind, line_no, &map)?);
    }
    Ok(out)
}

/// Every case as JSON Lines.
pub fn cases_to_jsonl(cases: &[EvalCase]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&c.to_json_line());
        out.push('\n');
    }
    out
}

/// Ingests every case's documents and fills in its gold chunk set.
///
/// Related-work gold is the chunks of the citation abstracts. The abstract
/// tasks have no chunk-level annotation, so their gold is the `k` case chunks
/// with the highest ROUGE-L F1 against the label (ties by position), or every
/// case chunk if none overlaps the label at all.
pub fn attach_cases<E: Embedder + ?Sized>(
    cases: &mut [EvalCase],
    store: &mut MemoryStore,
    embedder: &E,
    config: &PipelineConfig,
) -> Result<IngestReport, EvalError> {
    config.validate().map_err(crate::pipeline::PipelineError::from)?;
    let mut total = IngestReport::default();
    for case in cases.iter_mut() {
        let docs = case.documents();
        let plain: Vec<Document> = docs.iter().map(|(d, _)| d.clone()).collect();
        let report = ingest_documents(&plain, config.chunk_size_tokens, store, embedder)?;
        total.added += report.added;
        total.skipped += report.skipped;
        total.chunk_ids.extend(report.chunk_ids);

        let mut gold = BTreeSet::new();
        match case.kind {
            EvalKind::RelatedMulti => {
                for (doc, is_gold) in &docs {
                    if *is_gold {
                        for c in chunk_document(doc, config.chunk_size_tokens)? {
                            gold.insert(ItemId::new(c.chunk_id));
                        }
                    }
                }
            }
            EvalKind::AbstractSingle | EvalKind::AbstractMulti => {
                let mut scored: Vec<(f64, usize, String)> = Vec::new();
                for (doc, _) in &docs {
                    for c in chunk_document(doc, config.chunk_size_tokens)? {
                        let s = rouge_l_f1(&c.text, &case.label)?;
                        scored.push((s, scored.len(), c.chunk_id));
                    }
                }
                let any_overlap = scored.iter().any(|(s, _, _)| *s > 0.0);
                if any_overlap {
                    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    scored.retain(|(s, _, _)| *s > 0.0);
                    scored.truncate(config.k);
                }
                gold.extend(scored.into_iter().map(|(_, _, id)| ItemId::new(id)));
            }
        }
        case.gold_chunk_ids = gold;
    }
    Ok(total)
}

/// Gold ids for a related-work case computed from its text alone, without a
/// store. Used to cross-check [`attach_cases`].
pub fn citation_chunk_ids(case: &EvalCase, chunk_size_tokens: usize) -> Result<BTreeSet<ItemId>, EvalError> {
    let mut out = BTreeSet::new();
    if let CaseInputs::RelatedMulti { citation_abstracts, .. } = &case.inputs {
        for a in citation_abstracts {
            let doc = Document::new("x", a.clone());
            if a.trim().is_empty() {
                continue;
            }
            for c in chunk_document(&doc, chunk_size_tokens)? {
                out.insert(ItemId::new(content_id(&c.text)));
            }
        }
    }
    Ok(out)
}
