//! Language-model boundary: prompt rendering, thought/confidence parsing, and
//! a scripted backend for reproducible runs.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::count_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LmError {
    #[error("language model backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// A completion backend. Implementations must tolerate concurrent calls.
pub trait LanguageModel {
    fn complete(&self, prompt: &str) -> Result<String, LmError>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        (**self).complete(prompt)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for alloc::boxed::Box<M> {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        (**self).complete(prompt)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for alloc::sync::Arc<M> {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        (**self).complete(prompt)
    }
}

const ANSWER_INSTRUCTIONS: &str = "Answer the query using the retrieved information below. \
If the retrieved information is not sufficient to answer the query, reply with \"No\" instead of guessing.";
const ANSWER_CONTEXT_HEADER: &str = "Retrieved information:";
const ANSWER_QUERY_TAG: &str = "Query: ";
const ANSWER_TAIL: &str = "\nAnswer:";

const THOUGHT_PREFIX: &str = "Input: Given query:";
const THOUGHT_MIDDLE: &str = ", given response:";
const THOUGHT_SUFFIX: &str =
    ". Based on the provided query and its corresponding response, perform the following step: \
succinctly summarize both the question and answer into a coherent knowledge point, forming a fluent passage.\n\
Before summarizing, judge whether the response is valid and meaningful. Use confidence 1 if the knowledge point is \
logical and grounded in the response, and 0 if it is meaningless or hallucinated.\n\
Reply in exactly this format:\n\
CONFIDENCE: <0 or 1>\n\
THOUGHT: <the knowledge point>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
}

/// Indices of the texts that fit in `budget_tokens`, in rank order. A text
/// that would overflow the remaining budget is skipped and later, shorter
/// texts are still considered.
pub fn select_within_budget<S: AsRef<str>>(texts: &[S], budget_tokens: usize) -> Vec<usize> {
    let mut remaining = budget_tokens;
    let mut picked = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let n = count_tokens(text.as_ref());
        if n <= remaining {
            remaining -= n;
            picked.push(i);
        }
    }
    picked
}

/// Prompt for answering `query` from retrieved texts under a token budget.
/// The budget applies to the retrieved context only; the query is always
/// included.
pub fn render_answer_prompt<S: AsRef<str>>(query: &str, retrieved: &[S], context_budget_tokens: usize) -> String {
    let mut out = String::from(ANSWER_INSTRUCTIONS);
    out.push_str("\n\n");
    let picked = select_within_budget(retrieved, context_budget_tokens);
    if !picked.is_empty() {
        out.push_str(ANSWER_CONTEXT_HEADER);
        out.push('\n');
        for (rank, &i) in picked.iter().enumerate() {
            out.push('[');
            out.push_str(&(rank + 1).to_string());
            out.push_str("] ");
            // One line per item keeps the query recoverable from the prompt.
            for (j, tok) in crate::tokenize::tokens(retrieved[i].as_ref()).enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(tok);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str(ANSWER_QUERY_TAG);
    out.push_str(query);
    out.push_str(ANSWER_TAIL);
    out
}

/// Prompt asking the model to validate an answer and condense the query and
/// answer into one thought.
pub fn render_thought_prompt(query: &str, answer: &str) -> Result<String, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError::EmptyField("query"));
    }
    if answer.trim().is_empty() {
        return Err(PromptError::EmptyField("answer"));
    }
    let mut out = String::with_capacity(THOUGHT_PREFIX.len() + query.len() + answer.len() + THOUGHT_SUFFIX.len() + 20);
    out.push_str(THOUGHT_PREFIX);
    out.push_str(query);
    out.push_str(THOUGHT_MIDDLE);
    out.push_str(answer);
    out.push_str(THOUGHT_SUFFIX);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Answer,
    Thought,
}

/// Recovers which template produced `prompt` and the query embedded in it.
pub fn classify_prompt(prompt: &str) -> Option<(PromptKind, &str)> {
    if let Some(rest) = prompt.strip_prefix(THOUGHT_PREFIX) {
        let end = rest.find(THOUGHT_MIDDLE)?;
        return Some((PromptKind::Thought, &rest[..end]));
    }
    if let Some(rest) = prompt.strip_prefix(ANSWER_INSTRUCTIONS) {
        let mut body = rest.strip_prefix("\n\n")?.strip_suffix(ANSWER_TAIL)?;
        if let Some(ctx) = body.strip_prefix(ANSWER_CONTEXT_HEADER) {
            let end = ctx.find("\n\n")?;
            body = &ctx[end + 2..];
        }
        return Some((PromptKind::Answer, body.strip_prefix(ANSWER_QUERY_TAG)?));
    }
    None
}

/// A parsed thought reply. `confidence` is always 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtCandidate {
    pub text: String,
    pub confidence: u8,
}

fn tag_value<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    let rest = line.trim_start().strip_prefix(tag)?;
    Some(rest.trim_start().strip_prefix(':')?.trim())
}

/// Parses `CONFIDENCE: <0|1>` followed by `THOUGHT: <text>`, the thought
/// running to the end of the output. Tags are upper-case; whitespace around
/// them is ignored. Anything malformed is returned verbatim with confidence 0.
pub fn parse_thought_response(raw: &str) -> ThoughtCandidate {
    let reject = || ThoughtCandidate {
        text: raw.to_string(),
        confidence: 0,
    };
    let mut lines = raw.split('\n');
    let confidence = loop {
        match lines.next() {
            None => return reject(),
            Some(line) => {
                if let Some(value) = tag_value(line, "CONFIDENCE") {
                    break value;
                }
            }
        }
    };
    let confidence = match confidence {
        "1" => 1,
        "0" => 0,
        _ => return reject(),
    };
    let first = loop {
        match lines.next() {
            None => return reject(),
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => match tag_value(line, "THOUGHT") {
                Some(v) => break v,
                None => return reject(),
            },
        }
    };
    let mut text = String::from(first);
    for line in lines {
        text.push('\n');
        text.push_str(line);
    }
    let text = text.trim();
    if text.is_empty() {
        return reject();
    }
    ThoughtCandidate {
        text: text.to_string(),
        confidence,
    }
}

/// Formats a candidate in the wire format [`parse_thought_response`] reads.
pub fn format_thought_response(confidence: u8, text: &str) -> String {
    let mut out = String::from("CONFIDENCE: ");
    out.push_str(if confidence == 1 { "1" } else { "0" });
    out.push_str("\nTHOUGHT: ");
    out.push_str(text);
    out
}

/// A rule matches when every field it sets matches the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    /// Exact match on the query recovered from the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// Substring match on the whole prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub reply: String,
}

impl ScriptRule {
    fn matches(&self, prompt: &str, parsed: Option<(PromptKind, &str)>) -> bool {
        if let Some(kind) = self.kind {
            if parsed.map(|p| p.0) != Some(kind) {
                return false;
            }
        }
        if let Some(q) = &self.query {
            if parsed.map(|p| p.1) != Some(q.as_str()) {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !prompt.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

fn default_answer() -> String {
    "No".into()
}

fn default_thought() -> String {
    format_thought_response(0, "No meaningful knowledge point.")
}

/// Deterministic prompt-to-completion table. The first matching rule wins;
/// otherwise the fallback for the prompt's kind is returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedModel {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default = "default_answer")]
    pub fallback_answer: String,
    #[serde(default = "default_thought")]
    pub fallback_thought: String,
}

impl Default for ScriptedModel {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            fallback_answer: default_answer(),
            fallback_thought: default_thought(),
        }
    }
}

impl ScriptedModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, rule: ScriptRule) -> Self {
        self.rules.push(rule);
        self
    }

    /// Replies `answer` to the answer prompt for `query`.
    pub fn answer(self, query: impl Into<String>, answer: impl Into<String>) -> Self {
        self.rule(ScriptRule {
            kind: Some(PromptKind::Answer),
            query: Some(query.into()),
            contains: None,
            reply: answer.into(),
        })
    }

    /// Replies with `(confidence, thought)` to the thought prompt for `query`.
    pub fn thought(self, query: impl Into<String>, confidence: u8, thought: &str) -> Self {
        self.rule(ScriptRule {
            kind: Some(PromptKind::Thought),
            query: Some(query.into()),
            contains: None,
            reply: format_thought_response(confidence, thought),
        })
    }

    pub fn with_fallbacks(mut self, answer: impl Into<String>, thought: impl Into<String>) -> Self {
        self.fallback_answer = answer.into();
        self.fallback_thought = thought.into();
        self
    }

    fn reply_for(&self, prompt: &str) -> &str {
        let parsed = classify_prompt(prompt);
        if let Some(rule) = self.rules.iter().find(|r| r.matches(prompt, parsed)) {
            return &rule.reply;
        }
        match parsed.map(|p| p.0) {
            Some(PromptKind::Thought) => &self.fallback_thought,
            _ => &self.fallback_answer,
        }
    }
}

impl LanguageModel for ScriptedModel {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        Ok(self.reply_for(prompt).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::sha256_hex;
    use alloc::format;
    use proptest::prelude::*;

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn budget_skips_overflowing_texts() {
        let texts = [words(800, "a"), words(800, "b"), words(800, "c")];
        assert_eq!(select_within_budget(&texts, 2000), [0, 1]);
        let prompt = render_answer_prompt("q", &texts, 2000);
        assert!(prompt.contains("a799") && prompt.contains("b799") && !prompt.contains("c0"));
    }

    #[test]
    fn budget_skip_then_continue() {
        let texts = [words(1500, "a"), words(800, "b"), words(400, "c")];
        assert_eq!(select_within_budget(&texts, 2000), [0, 2]);
    }

    #[test]
    fn empty_retrieval_is_query_only() {
        let empty: [&str; 0] = [];
        let prompt = render_answer_prompt("what is x?", &empty, 2000);
        assert_eq!(prompt, format!("{ANSWER_INSTRUCTIONS}\n\nQuery: what is x?\nAnswer:"));
        assert!(!prompt.contains(ANSWER_CONTEXT_HEADER));
    }

    #[test]
    fn generous_budget_keeps_rank_order() {
        let texts = ["first text", "second text", "third text"];
        let prompt = render_answer_prompt("q", &texts, 10_000);
        let (a, b, c) = (
            prompt.find("first").unwrap(),
            prompt.find("second").unwrap(),
            prompt.find("third").unwrap(),
        );
        assert!(a < b && b < c);
    }

    #[test]
    fn thought_prompt_contains_template() {
        let q = "What has driven significant progress in various NLP tasks in recent years?";
        let a = "Benchmarks such as GLUE.";
        let p = render_thought_prompt(q, a).unwrap();
        assert!(p.starts_with(&format!(
            "Input: Given query:{q}, given response:{a}. Based on the provided query"
        )));
        assert!(p.contains(
            "succinctly summarize both the question and answer into a coherent knowledge point, forming a fluent passage."
        ));
        assert!(p.contains("CONFIDENCE: <0 or 1>\nTHOUGHT:"));
        assert_eq!(render_thought_prompt(q, " "), Err(PromptError::EmptyField("answer")));
        assert_eq!(render_thought_prompt("", a), Err(PromptError::EmptyField("query")));
    }

    #[test]
    fn template_bytes_are_stable() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut hashes = Vec::new();
        for _ in 0..100 {
            let q: String = (0..rng.gen_range(1..40))
                .map(|_| (b'a' + rng.gen_range(0..26)) as char)
                .collect();
            let a: String = (0..rng.gen_range(1..80))
                .map(|_| (b'a' + rng.gen_range(0..26)) as char)
                .collect();
            let p = render_thought_prompt(&q, &a).unwrap();
            // Cut the substitutions out at the positions the template places them.
            let after_q = THOUGHT_PREFIX.len() + q.len();
            assert_eq!(&p[THOUGHT_PREFIX.len()..after_q], q);
            let a_start = after_q + THOUGHT_MIDDLE.len();
            assert_eq!(&p[a_start..a_start + a.len()], a);
            let skeleton = format!(
                "{}{}{}",
                &p[..THOUGHT_PREFIX.len()],
                &p[after_q..a_start],
                &p[a_start + a.len()..]
            );
            hashes.push(sha256_hex(skeleton.as_bytes()));
        }
        hashes.dedup();
        assert_eq!(hashes.len(), 1);
    }

    #[test]
    fn classify_round_trips_queries() {
        let p = render_answer_prompt("Query: tricky\nquery", &["ctx"], 100);
        assert_eq!(classify_prompt(&p), Some((PromptKind::Answer, "Query: tricky\nquery")));
        let p = render_answer_prompt("real", &["a\n\nQuery: fake\nAnswer:"], 100);
        assert_eq!(classify_prompt(&p), Some((PromptKind::Answer, "real")));
        let p = render_answer_prompt("bare", &[] as &[&str], 100);
        assert_eq!(classify_prompt(&p), Some((PromptKind::Answer, "bare")));
        let t = render_thought_prompt("q1", "ans").unwrap();
        assert_eq!(classify_prompt(&t), Some((PromptKind::Thought, "q1")));
        assert_eq!(classify_prompt("hello"), None);
    }

    #[test]
    fn parse_well_formed() {
        let c = parse_thought_response("CONFIDENCE: 1\nTHOUGHT: Benchmarks drive NLP progress.");
        assert_eq!(
            c,
            ThoughtCandidate {
                text: "Benchmarks drive NLP progress.".into(),
                confidence: 1
            }
        );
        let multi = parse_thought_response("  CONFIDENCE :1 \n\n THOUGHT:  line one\nline two\n");
        assert_eq!(
            multi,
            ThoughtCandidate {
                text: "line one\nline two".into(),
                confidence: 1
            }
        );
    }

    #[test]
    fn parse_malformed_is_rejected() {
        let raw = "I cannot answer this.";
        assert_eq!(
            parse_thought_response(raw),
            ThoughtCandidate {
                text: raw.into(),
                confidence: 0
            }
        );
        assert_eq!(parse_thought_response("confidence: 0\nTHOUGHT: anything").confidence, 0);
        assert_eq!(parse_thought_response("CONFIDENCE: 0\nTHOUGHT: anything").confidence, 0);
        assert_eq!(parse_thought_response("CONFIDENCE: 1").confidence, 0);
        assert_eq!(parse_thought_response("CONFIDENCE: 1\nTHOUGHT:   ").confidence, 0);
        assert_eq!(parse_thought_response("CONFIDENCE: yes\nTHOUGHT: x").confidence, 0);
        assert_eq!(parse_thought_response("CONFIDENCE: 1\nnoise\nTHOUGHT: x").confidence, 0);
    }

    #[test]
    fn format_parse_round_trip() {
        for c in [0u8, 1] {
            let parsed = parse_thought_response(&format_thought_response(c, "a point"));
            assert_eq!(
                parsed,
                ThoughtCandidate {
                    text: "a point".into(),
                    confidence: c
                }
            );
        }
    }

    #[test]
    fn scripted_rules_and_fallbacks() {
        let lm = ScriptedModel::new().answer("q1", "A1").thought("q1", 1, "T1");
        let ap = render_answer_prompt("q1", &["x"], 10);
        assert_eq!(lm.complete(&ap).unwrap(), "A1");
        let tp = render_thought_prompt("q1", "A1").unwrap();
        assert_eq!(parse_thought_response(&lm.complete(&tp).unwrap()).text, "T1");
        let other = render_thought_prompt("q2", "A").unwrap();
        assert_eq!(parse_thought_response(&lm.complete(&other).unwrap()).confidence, 0);
        assert_eq!(lm.complete(&render_answer_prompt("q2", &["x"], 10)).unwrap(), "No");
        assert_eq!(lm.complete(&ap).unwrap(), lm.complete(&ap).unwrap());
    }

    #[test]
    fn scripted_contains_rule() {
        let lm = ScriptedModel::new().rule(ScriptRule {
            kind: None,
            query: None,
            contains: Some("magic".into()),
            reply: "hit".into(),
        });
        assert_eq!(lm.complete("some magic prompt").unwrap(), "hit");
        assert_eq!(lm.complete("plain").unwrap(), "No");
    }

    fn has_confidence_one_tag(raw: &str) -> bool {
        raw.split('\n').any(|l| tag_value(l, "CONFIDENCE") == Some("1"))
    }

    #[test]
    fn fuzz_never_accepts_without_tag() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let alphabet = b"CONFIDENCETHOUGHT:01 \n\txyz";
        for i in 0..10_000 {
            let len = rng.gen_range(0..64);
            let bytes: Vec<u8> = if i % 2 == 0 {
                (0..len).map(|_| rng.gen::<u8>()).collect()
            } else {
                (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
            };
            let raw = String::from_utf8_lossy(&bytes);
            let c = parse_thought_response(&raw);
            assert!(c.confidence <= 1);
            if c.confidence == 1 {
                assert!(has_confidence_one_tag(&raw), "{raw:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn parse_is_total(raw in ".*") {
            let c = parse_thought_response(&raw);
            prop_assert!(c.confidence <= 1);
            if c.confidence == 1 {
                prop_assert!(has_confidence_one_tag(&raw));
            }
        }
    }
}
