use std::collections::BTreeSet;

use proptest::prelude::*;
use thoughtmem_core::memory::encode;
use thoughtmem_core::{
    ingest_documents, Document, Engine, HashedBowEmbedder, ItemId, ItemKind, MemoryStore, PipelineConfig,
    ScriptedModel, ThoughtOutcome,
};

const WORDS: [&str; 12] = [
    "river", "delta", "basin", "flood", "levee", "tide", "marsh", "reef", "dune", "cliff", "fjord", "lagoon",
];

fn base_store(e: &HashedBowEmbedder) -> MemoryStore {
    let mut store = MemoryStore::new(256);
    let docs: Vec<Document> = (0..4)
        .map(|d| {
            let text: Vec<&str> = (0..9).map(|i| WORDS[(d * 3 + i) % WORDS.len()]).collect();
            Document::new(format!("doc{d}"), text.join(" "))
        })
        .collect();
    ingest_documents(&docs, 3, &mut store, e).unwrap();
    store
}

fn phrase(picks: &[usize]) -> String {
    picks
        .iter()
        .map(|&i| WORDS[i % WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone)]
struct Step {
    query: Vec<usize>,
    confidence: u8,
    thought: Vec<usize>,
}

fn steps() -> impl Strategy<Value = Vec<Step>> {
    let step = (
        proptest::collection::vec(0usize..12, 1..4),
        0u8..=1,
        proptest::collection::vec(0usize..12, 1..4),
    )
        .prop_map(|(query, confidence, thought)| Step {
            query,
            confidence,
            thought,
        });
    proptest::collection::vec(step, 1..14)
}

fn script(steps: &[Step]) -> (ScriptedModel, Vec<String>) {
    let mut lm = ScriptedModel::new();
    let mut queries = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        // A numeric suffix keeps each query's rule distinct.
        let q = format!("{} n{i}", phrase(&s.query));
        lm = lm.thought(q.clone(), s.confidence, &phrase(&s.thought));
        queries.push(q);
    }
    (lm, queries)
}

fn chunk_view(store: &MemoryStore) -> Vec<(ItemId, String, u64)> {
    store
        .items()
        .filter(|i| i.kind() == ItemKind::Chunk)
        .map(|i| (i.id.clone(), i.text().to_string(), i.created_seq))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn session_postconditions(steps in steps(), k in 1usize..6) {
        let e = HashedBowEmbedder::default();
        let config = PipelineConfig { k, ..PipelineConfig::default() };
        let (lm, queries) = script(&steps);
        let mut store = base_store(&e);
        let chunks_before = chunk_view(&store);
        let thoughts_before = store.thought_count();

        let out = Engine::new(&lm, &e, config).run_session(&mut store, &queries).unwrap();
        prop_assert_eq!(out.records.len(), queries.len());
        prop_assert_eq!(chunk_view(&store), chunks_before);

        let mut accepted = 0;
        for r in &out.records {
            match &r.thought_outcome {
                ThoughtOutcome::Accepted { item_id } => {
                    accepted += 1;
                    prop_assert_eq!(r.confidence, Some(1));
                    prop_assert!(!r.redundancy.as_ref().unwrap().redundant);
                    let item = store.get(item_id).unwrap();
                    prop_assert_eq!(item.immediate_sources().to_vec(), r.retrieved.ids());
                    prop_assert_eq!(
                        store.root_source(item_id).unwrap(),
                        store.root_source_union(&r.retrieved.ids()).unwrap()
                    );
                }
                ThoughtOutcome::RejectedRedundant { max_similarity, .. } => {
                    prop_assert!(*max_similarity >= config.epsilon);
                }
                ThoughtOutcome::RejectedLowConfidence => prop_assert_eq!(r.confidence, Some(0)),
                ThoughtOutcome::NoThought => {}
            }
        }
        prop_assert_eq!(store.thought_count(), thoughts_before + accepted);
    }

    #[test]
    fn replay_is_deterministic(steps in steps()) {
        let e = HashedBowEmbedder::default();
        let (lm, queries) = script(&steps);
        let run = || {
            let mut store = base_store(&e);
            let out = Engine::new(&lm, &e, PipelineConfig::default()).run_session(&mut store, &queries).unwrap();
            (encode(&store), out.answers)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn ingestion_is_idempotent_and_content_addressed(
        docs in proptest::collection::vec(proptest::collection::vec(0usize..12, 1..30), 1..5),
        size in 1usize..6,
    ) {
        let e = HashedBowEmbedder::default();
        let docs: Vec<Document> = docs.iter().enumerate().map(|(i, d)| Document::new(format!("d{i}"), phrase(d))).collect();
        let mut store = MemoryStore::new(256);
        ingest_documents(&docs, size, &mut store, &e).unwrap();
        let once = chunk_view(&store);
        let again = ingest_documents(&docs, size, &mut store, &e).unwrap();
        prop_assert_eq!(again.added, 0);
        prop_assert_eq!(chunk_view(&store), once.clone());

        let ids: BTreeSet<&ItemId> = once.iter().map(|c| &c.0).collect();
        let texts: BTreeSet<&String> = once.iter().map(|c| &c.1).collect();
        prop_assert_eq!(ids.len(), texts.len());
        prop_assert_eq!(ids.len(), once.len());
    }
}

#[test]
fn failing_backend_halts_at_its_index() {
    use thoughtmem_core::{LanguageModel, LmError};
    struct FailsOn(&'static str, ScriptedModel);
    impl LanguageModel for FailsOn {
        fn complete(&self, prompt: &str) -> Result<String, LmError> {
            if prompt.contains(self.0) {
                Err(LmError::BackendUnavailable("down".into()))
            } else {
                self.1.complete(prompt)
            }
        }
    }
    let e = HashedBowEmbedder::default();
    let lm = FailsOn(
        "outage",
        ScriptedModel::new().thought("river delta", 1, "lagoon river cliff delta"),
    );
    let mut store = base_store(&e);
    let err = Engine::new(&lm, &e, PipelineConfig::default())
        .run_session(&mut store, &["river delta", "reef outage", "tide"])
        .unwrap_err();
    assert_eq!(err.index, 1);
    assert_eq!(err.completed.len(), 1);
    assert_eq!(store.thought_count(), 1);
}
