//! Small synthetic fixtures whose retrieval outcomes are fixed by
//! construction under the hashed embedder.
//!
//! Every word in a fixture occupies its own hash bucket (see [`Vocabulary`]),
//! so cosine scores reduce to counting shared words and can be worked out by
//! hand.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::cases::{attach_cases, EvalCase, EvalKind, RELATED_RETRIEVAL_PROMPT};
use super::EvalError;
use crate::corpus::{content_id, ingest_documents, DataChunk, Document};
use crate::embedding::{
    hashed_bow_embed, hashed_bucket, Embedder, EmbeddingVector, HashedBowEmbedder, DEFAULT_DIMENSION,
};
use crate::lm::ScriptedModel;
use crate::memory::{ItemId, MemoryStore, Thought};
use crate::metrics::{coverage, CoverageResult};
use crate::pipeline::{Engine, PipelineConfig, SessionOutput};
use crate::tokenize::lowercase_tokens;

/// Hands out words that land in distinct hash buckets.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    dimension: usize,
    used: BTreeSet<usize>,
}

impl Vocabulary {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            used: BTreeSet::new(),
        }
    }

    /// Marks the buckets of every token in `text` as taken.
    pub fn reserve(&mut self, text: &str) {
        for t in lowercase_tokens(text) {
            self.used.insert(hashed_bucket(&t, self.dimension));
        }
    }

    /// `stem` itself if its bucket is free, otherwise the first free
    /// `stem2`, `stem3`, ... Panics once every bucket is taken.
    pub fn mint(&mut self, stem: &str) -> String {
        assert!(self.used.len() < self.dimension, "vocabulary exhausted");
        let stem = stem.to_lowercase();
        let mut n = 1usize;
        loop {
            let word = if n == 1 { stem.clone() } else { format!("{stem}{n}") };
            if self.used.insert(hashed_bucket(&word, self.dimension)) {
                return word;
            }
            n += 1;
        }
    }

    pub fn used(&self) -> usize {
        self.used.len()
    }
}

fn phrase(words: &[&String]) -> String {
    words.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ")
}

/// Six chunks K1..K6 where a two-item retrieval window sees only K2 and K3
/// of the four gold chunks K2..K5, plus two thoughts that each merge a gold
/// pair so that the same window covers all four.
#[derive(Debug, Clone)]
pub struct MotivatingScenario {
    pub store: MemoryStore,
    pub embedder: HashedBowEmbedder,
    pub query: String,
    pub window: usize,
    /// K1..K6 in order.
    pub chunks: Vec<ItemId>,
    pub gold: BTreeSet<ItemId>,
    /// T23 (sources K2, K3) and T45 (sources K4, K5), not yet inserted.
    pub thoughts: Vec<(Thought, EmbeddingVector)>,
}

/// Builds the two-window coverage scenario.
///
/// The query shares one word with each of K2..K5. K2 and K3 have three words
/// and K4 and K5 have four, so K2 and K3 score higher and fill the window.
/// Each thought shares two words with the query and outranks every chunk.
pub fn build_motivating_scenario() -> MotivatingScenario {
    let embedder = HashedBowEmbedder::default();
    let mut v = Vocabulary::new(DEFAULT_DIMENSION);
    let hooks: Vec<String> = ["sediment", "glacier", "volcano", "monsoon"]
        .iter()
        .map(|w| v.mint(w))
        .collect();
    let fill = |v: &mut Vocabulary, words: &[&str]| -> Vec<String> { words.iter().map(|w| v.mint(w)).collect() };
    let k1 = fill(&mut v, &["quartz", "crystal", "lattice"]);
    let k2 = fill(&mut v, &["river", "delta"]);
    let k3 = fill(&mut v, &["moraine", "valley"]);
    let k4 = fill(&mut v, &["magma", "ash", "cone"]);
    let k5 = fill(&mut v, &["rainfall", "humidity", "season"]);
    let k6 = fill(&mut v, &["comet", "orbit", "perihelion"]);
    let texts = [
        phrase(&k1.iter().collect::<Vec<_>>()),
        phrase(&[&hooks[0], &k2[0], &k2[1]]),
        phrase(&[&hooks[1], &k3[0], &k3[1]]),
        phrase(&[&hooks[2], &k4[0], &k4[1], &k4[2]]),
        phrase(&[&hooks[3], &k5[0], &k5[1], &k5[2]]),
        phrase(&k6.iter().collect::<Vec<_>>()),
    ];
    let mut store = MemoryStore::new(embedder.dimension());
    let docs: Vec<Document> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("K{}", i + 1), t.clone()))
        .collect();
    let report = ingest_documents(&docs, 500, &mut store, &embedder).expect("fixture documents are valid");
    let chunks = report.chunk_ids;
    let gold: BTreeSet<ItemId> = chunks[1..5].iter().cloned().collect();

    let thought = |id: &str, text: String, sources: &[ItemId]| {
        let emb = embedder.embed(&text).expect("fixture thoughts are non-empty");
        (
            Thought {
                thought_id: ItemId::new(id),
                text,
                query_id: "seed".into(),
                immediate_sources: sources.to_vec(),
            },
            emb,
        )
    };
    let thoughts = alloc::vec![
        thought("T23", phrase(&[&hooks[0], &hooks[1]]), &chunks[1..3]),
        thought("T45", phrase(&[&hooks[2], &hooks[3]]), &chunks[3..5]),
    ];
    MotivatingScenario {
        store,
        query: phrase(&hooks.iter().collect::<Vec<_>>()),
        embedder,
        window: 2,
        chunks,
        gold,
        thoughts,
    }
}

impl MotivatingScenario {
    /// Inserts T23 and T45.
    pub fn seed_thoughts(&mut self) -> Vec<ItemId> {
        self.thoughts
            .clone()
            .into_iter()
            .map(|(t, e)| {
                self.store
                    .insert_thought(t, e)
                    .expect("fixture thoughts reference stored chunks")
            })
            .collect()
    }

    /// Ids retrieved for the query with the scenario's window.
    pub fn retrieve(&self) -> Vec<ItemId> {
        let emb = self.embedder.embed(&self.query).expect("query is non-empty");
        self.store
            .retrieve_top_k(&emb, self.window)
            .expect("dimensions match")
            .into_iter()
            .map(|e| e.id)
            .collect()
    }

    pub fn coverage(&self) -> CoverageResult {
        coverage(&self.retrieve(), &self.gold, &self.store).expect("fixture ids are stored")
    }
}

/// Related-work cases whose gold is split across more chunks than the
/// retrieval window holds, plus a scripted session that merges gold pairs
/// into thoughts.
#[derive(Debug, Clone)]
pub struct ThoughtFixture {
    pub cases: Vec<EvalCase>,
    /// Every case attached, no thoughts.
    pub store: MemoryStore,
    pub embedder: HashedBowEmbedder,
    pub lm: ScriptedModel,
    pub config: PipelineConfig,
    /// Session queries that create thoughts, in order.
    pub evolution_queries: Vec<String>,
}

impl ThoughtFixture {
    pub fn engine(&self) -> Engine<'_> {
        Engine::new(&self.lm, &self.embedder, self.config)
    }

    /// Runs the evolution queries over a copy of the store.
    pub fn evolve(&self) -> Result<(MemoryStore, SessionOutput), EvalError> {
        let mut store = self.store.clone();
        let out = self.engine().run_session(&mut store, &self.evolution_queries)?;
        Ok((store, out))
    }
}

fn related_record(
    id: &str,
    title: &str,
    own: &str,
    label: &str,
    citations: &[String],
    random: &[String],
) -> Map<String, Value> {
    let Value::Object(m) = json!({
        "id": id,
        "title": title,
        "own abstract": own,
        "own related work": label,
        "citations' abstracts": citations,
        "other random abstracts": random,
    }) else {
        unreachable!()
    };
    m
}

fn abstract_of(v: &mut Vocabulary, hook: &str, stem: &str) -> String {
    let words: Vec<String> = (1..=3).map(|i| v.mint(&format!("{stem}{i}x"))).collect();
    format!("{hook} {}", words.join(" "))
}

fn fresh_vocabulary() -> Vocabulary {
    let mut v = Vocabulary::new(DEFAULT_DIMENSION);
    v.reserve(RELATED_RETRIEVAL_PROMPT);
    v
}

fn finish(records: Vec<Map<String, Value>>, lm: ScriptedModel, evolution_queries: Vec<String>) -> ThoughtFixture {
    let embedder = HashedBowEmbedder::default();
    let config = PipelineConfig {
        k: 2,
        ..PipelineConfig::default()
    };
    let mut cases: Vec<EvalCase> = records
        .iter()
        .enumerate()
        .map(|(i, r)| EvalCase::from_record(EvalKind::RelatedMulti, i + 1, r).expect("fixture records are valid"))
        .collect();
    let mut store = MemoryStore::new(embedder.dimension());
    attach_cases(&mut cases, &mut store, &embedder, &config).expect("fixture cases attach");
    let mut lm = lm;
    for c in &cases {
        lm = lm.answer(c.query(), c.label.clone());
    }
    ThoughtFixture {
        cases,
        store,
        embedder,
        lm,
        config,
        evolution_queries,
    }
}

/// `n_cases` related-work cases, each citing four abstracts A..D that share
/// one word apiece with the case's own abstract. A window of two sees only
/// two of them (recall 0.5). The evolution session asks for the A+B and
/// C+D pairs of every case in turn, producing thoughts that each cover one
/// pair; with both of a case's thoughts available its recall reaches 1.
pub fn build_scaling_fixture(n_cases: usize) -> ThoughtFixture {
    let mut v = fresh_vocabulary();
    let mut records = Vec::new();
    let mut lm = ScriptedModel::new();
    let mut evolution = Vec::new();
    for c in 0..n_cases {
        let hooks: Vec<String> = ["a", "b", "c", "d"]
            .iter()
            .map(|h| v.mint(&format!("cite{c}{h}")))
            .collect();
        let citations: Vec<String> = hooks
            .iter()
            .enumerate()
            .map(|(i, h)| abstract_of(&mut v, h, &format!("c{c}w{i}")))
            .collect();
        let noise = v.mint(&format!("noise{c}"));
        let random = alloc::vec![abstract_of(&mut v, &noise, &format!("n{c}w"))];
        let own = hooks.join(" ");
        records.push(related_record(
            &format!("scaling-{c}"),
            &format!("Case {c}"),
            &own,
            &format!("{own} surveyed"),
            &citations,
            &random,
        ));
        for pair in [&hooks[0..2], &hooks[2..4]] {
            let q = pair.join(" ");
            lm = lm
                .answer(q.clone(), format!("{q} are related"))
                .thought(q.clone(), 1, &q);
            evolution.push(q);
        }
    }
    finish(records, lm, evolution)
}

/// Pairs of related-work cases over shared citations A and B.
///
/// The easy case's abstract is exactly the two citation hooks, so it
/// retrieves both and its session thought (confidence 1) merges them. The
/// hard case adds a distractor abstract that strongly matches its own
/// abstract and takes one of the two window slots, so without thoughts it
/// recovers only one citation. Once the easy sibling's thought exists, that
/// thought takes the other slot and covers both. The hard case's own
/// thought has confidence 0 and is never stored.
pub fn build_transfer_fixture(families: usize) -> ThoughtFixture {
    let mut v = fresh_vocabulary();
    let mut records = Vec::new();
    let mut lm = ScriptedModel::new();
    for f in 0..families {
        let a = v.mint(&format!("fam{f}a"));
        let b = v.mint(&format!("fam{f}b"));
        let r = v.mint(&format!("fam{f}r"));
        let citations = alloc::vec![
            abstract_of(&mut v, &a, &format!("f{f}a")),
            abstract_of(&mut v, &b, &format!("f{f}b"))
        ];
        let filler: Vec<String> = (1..=2).map(|i| v.mint(&format!("f{f}r{i}x"))).collect();
        let distractor = format!("{r} {r} {}", filler.join(" "));
        let z = v.mint(&format!("fam{f}z"));
        let unrelated = abstract_of(&mut v, &z, &format!("f{f}z"));

        let easy_own = format!("{a} {b}");
        let hard_own = format!("{a} {b} {r} {r}");
        records.push(related_record(
            &format!("easy-{f}"),
            &format!("Easy {f}"),
            &easy_own,
            &format!("{easy_own} related"),
            &citations,
            &[unrelated],
        ));
        records.push(related_record(
            &format!("hard-{f}"),
            &format!("Hard {f}"),
            &hard_own,
            &format!("{hard_own} related"),
            &citations,
            &[distractor],
        ));
        let easy_query = format!("{RELATED_RETRIEVAL_PROMPT}{easy_own}");
        let hard_query = format!("{RELATED_RETRIEVAL_PROMPT}{hard_own}");
        lm = lm
            .thought(easy_query, 1, &easy_own)
            .thought(hard_query, 0, &format!("{r} guess"));
    }
    finish(records, lm, Vec::new())
}

/// Case ids whose recall should improve when `split` puts the easy case of
/// the same family in the evolution half and the hard case in the test half.
pub fn transfer_beneficiaries(cases: &[EvalCase], evolution: &[usize], test: &[usize]) -> Vec<String> {
    let evolved: BTreeSet<&str> = evolution.iter().map(|&i| cases[i].case_id.as_str()).collect();
    test.iter()
        .map(|&i| cases[i].case_id.as_str())
        .filter(|id| {
            id.strip_prefix("hard-")
                .is_some_and(|f| evolved.contains(format!("easy-{f}").as_str()))
        })
        .map(ToString::to_string)
        .collect()
}

/// A seeded random store of 1..=`max_items` items. The first item is a chunk;
/// each later item is a chunk with probability one third, otherwise a thought
/// citing 1 to 4 distinct earlier items. Chunk ids are content hashes,
/// thought ids `t{i}`, and embeddings are hashed at dimension 16.
pub fn random_dag_store(seed: u64, max_items: usize) -> MemoryStore {
    const DIM: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_items.max(1));
    let mut store = MemoryStore::new(DIM);
    let mut ids: Vec<ItemId> = Vec::with_capacity(n);
    for i in 0..n {
        let text = format!("w{} w{}", i, rng.gen_range(0..64));
        let emb = hashed_bow_embed(&text, DIM).expect("non-empty text");
        let id = if i == 0 || rng.gen_ratio(1, 3) {
            let chunk = DataChunk {
                chunk_id: content_id(&text),
                doc_id: "random".into(),
                ordinal: i as u32,
                text,
                token_count: 2,
            };
            store.insert_chunk(chunk, emb)
        } else {
            let fanout = rng.gen_range(1..=4usize).min(ids.len());
            let sources: Vec<ItemId> = rand::seq::index::sample(&mut rng, ids.len(), fanout)
                .into_iter()
                .map(|j| ids[j].clone())
                .collect();
            let thought = Thought {
                thought_id: ItemId::new(format!("t{i}")),
                text,
                query_id: format!("q{i}"),
                immediate_sources: sources,
            };
            store.insert_thought(thought, emb)
        };
        ids.push(id.expect("random items are well formed"));
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minted_words_are_collision_free() {
        let mut v = Vocabulary::new(16);
        let words: Vec<String> = (0..16).map(|i| v.mint(&format!("w{i}"))).collect();
        let buckets: BTreeSet<usize> = words.iter().map(|w| hashed_bucket(w, 16)).collect();
        assert_eq!(buckets.len(), 16);
        assert_eq!(v.used(), 16);
    }

    #[test]
    fn reserved_buckets_are_avoided() {
        let mut v = Vocabulary::new(64);
        v.reserve("Alpha beta");
        let w = v.mint("alpha");
        assert_ne!(w, "alpha");
        assert_ne!(hashed_bucket(&w, 64), hashed_bucket("alpha", 64));
    }

    #[test]
    fn random_store_is_seeded() {
        let a = random_dag_store(7, 50);
        let b = random_dag_store(7, 50);
        assert_eq!(crate::memory::encode(&a), crate::memory::encode(&b));
        assert!(a.len() <= 50 && a.chunk_count() >= 1);
        assert_eq!(a.chunk_count() + a.thought_count(), a.len());
    }

    #[test]
    fn motivating_scores_match_hand_computation() {
        let s = build_motivating_scenario();
        let q = s.embedder.embed(&s.query).unwrap();
        let scores = s.store.retrieve_top_k(&q, 6).unwrap();
        let by_id = |id: &ItemId| scores.iter().find(|e| &e.id == id).unwrap().score;
        let three = 1.0 / (2.0 * libm::sqrt(3.0));
        for (i, expected) in [0.0, three, three, 0.25, 0.25, 0.0].iter().enumerate() {
            assert!((by_id(&s.chunks[i]) - expected).abs() < 1e-12, "K{}", i + 1);
        }
    }
}
