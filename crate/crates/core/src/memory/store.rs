use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::{ItemId, ItemKind, MemoryError, MemoryItem, Payload, RetrievedEntry, Thought};
use crate::corpus::DataChunk;
use crate::embedding::{dot, EmbeddingVector};

/// In-memory union of chunks and thoughts.
///
/// Writers need `&mut MemoryStore`, so the single-writer rule is enforced by
/// the borrow checker; callers that share a store across threads wrap it in a
/// lock. A closed store rejects every insert with [`MemoryError::StoreClosed`].
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    dimension: usize,
    items: Vec<MemoryItem>,
    index: BTreeMap<ItemId, usize>,
    next_seq: u64,
    closed: bool,
}

impl MemoryStore {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            items: Vec::new(),
            index: BTreeMap::new(),
            next_seq: 0,
            closed: false,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn chunk_count(&self) -> usize {
        self.items.iter().filter(|i| i.kind() == ItemKind::Chunk).count()
    }

    pub fn thought_count(&self) -> usize {
        self.items.iter().filter(|i| i.kind() == ItemKind::Thought).count()
    }

    /// Number of provenance edges (thought to immediate source).
    pub fn edge_count(&self) -> usize {
        self.items.iter().map(|i| i.sources.len()).sum()
    }

    /// Sequence number the next insert will receive.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Items in insertion order.
    pub fn items(&self) -> impl Iterator<Item = &MemoryItem> {
        self.items.iter()
    }

    pub fn get(&self, id: &ItemId) -> Option<&MemoryItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn reopen(&mut self) {
        self.closed = false;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn check_writable(&self, embedding: &EmbeddingVector) -> Result<(), MemoryError> {
        if self.closed {
            return Err(MemoryError::StoreClosed);
        }
        self.check_dimension(embedding)
    }

    fn check_dimension(&self, embedding: &EmbeddingVector) -> Result<(), MemoryError> {
        if embedding.dimension() != self.dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension,
                found: embedding.dimension(),
            });
        }
        Ok(())
    }

    /// Inserts a chunk keyed by its `chunk_id`. Re-inserting an existing
    /// chunk id is a no-op that returns the id.
    pub fn insert_chunk(&mut self, chunk: DataChunk, embedding: EmbeddingVector) -> Result<ItemId, MemoryError> {
        self.check_writable(&embedding)?;
        let id = ItemId::new(chunk.chunk_id.clone());
        if let Some(&i) = self.index.get(&id) {
            return match self.items[i].kind() {
                ItemKind::Chunk => Ok(id),
                ItemKind::Thought => Err(MemoryError::DuplicateId(id)),
            };
        }
        if chunk.text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        let seq = self.next_seq;
        self.push(id.clone(), Payload::Chunk(chunk), embedding, seq, Vec::new());
        Ok(id)
    }

    /// Inserts a thought and records one provenance edge per immediate source.
    pub fn insert_thought(&mut self, thought: Thought, embedding: EmbeddingVector) -> Result<ItemId, MemoryError> {
        self.check_writable(&embedding)?;
        let seq = self.next_seq;
        self.insert_thought_at(thought, embedding, seq)
    }

    pub(super) fn insert_thought_at(
        &mut self,
        thought: Thought,
        embedding: EmbeddingVector,
        seq: u64,
    ) -> Result<ItemId, MemoryError> {
        if thought.immediate_sources.is_empty() {
            return Err(MemoryError::EmptySourceList);
        }
        if thought.text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        if self.index.contains_key(&thought.thought_id) {
            return Err(MemoryError::DuplicateId(thought.thought_id));
        }
        let mut sources = Vec::with_capacity(thought.immediate_sources.len());
        for source in &thought.immediate_sources {
            match self.index.get(source) {
                // Everything already indexed has a smaller sequence number.
                Some(&i) => sources.push(i),
                None => return Err(MemoryError::UnknownSource(source.clone())),
            }
        }
        let id = thought.thought_id.clone();
        self.push(id.clone(), Payload::Thought(thought), embedding, seq, sources);
        Ok(id)
    }

    pub(super) fn insert_chunk_at(
        &mut self,
        chunk: DataChunk,
        embedding: EmbeddingVector,
        seq: u64,
    ) -> Result<ItemId, MemoryError> {
        let id = ItemId::new(chunk.chunk_id.clone());
        if self.index.contains_key(&id) {
            return Err(MemoryError::DuplicateId(id));
        }
        if chunk.text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        self.push(id.clone(), Payload::Chunk(chunk), embedding, seq, Vec::new());
        Ok(id)
    }

    fn push(&mut self, id: ItemId, payload: Payload, embedding: EmbeddingVector, seq: u64, sources: Vec<usize>) {
        debug_assert!(seq >= self.next_seq);
        let level = if sources.is_empty() {
            1.0
        } else {
            let sum: f64 = sources.iter().map(|&s| self.items[s].level).sum();
            1.0 + sum / sources.len() as f64
        };
        self.index.insert(id.clone(), self.items.len());
        self.items.push(MemoryItem {
            id,
            payload,
            embedding,
            created_seq: seq,
            level,
            sources,
        });
        self.next_seq = seq + 1;
    }

    fn position(&self, id: &ItemId) -> Result<usize, MemoryError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| MemoryError::UnknownItem(id.clone()))
    }

    /// Root-source mapping: the set of chunks an item ultimately derives from.
    pub fn root_source(&self, id: &ItemId) -> Result<BTreeSet<ItemId>, MemoryError> {
        let start = self.position(id)?;
        let mut seen = vec![false; self.items.len()];
        let mut stack = vec![start];
        let mut roots = BTreeSet::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let item = &self.items[i];
            if item.sources.is_empty() {
                roots.insert(item.id.clone());
                continue;
            }
            for &s in &item.sources {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        Ok(roots)
    }

    /// Union of root sources over several items.
    pub fn root_source_union<'a, I>(&self, ids: I) -> Result<BTreeSet<ItemId>, MemoryError>
    where
        I: IntoIterator<Item = &'a ItemId>,
    {
        let mut out = BTreeSet::new();
        for id in ids {
            out.extend(self.root_source(id)?);
        }
        Ok(out)
    }

    /// Abstraction level: 1 for chunks, 1 plus the mean source level for
    /// thoughts. Computed once at insert time.
    pub fn abstraction_level(&self, id: &ItemId) -> Result<f64, MemoryError> {
        Ok(self.items[self.position(id)?].level)
    }

    /// Exhaustive top-K by cosine similarity; equal scores are ordered by
    /// ascending `created_seq`.
    pub fn retrieve_top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievedEntry>, MemoryError> {
        self.check_dimension(query)?;
        let mut scored: Vec<(f64, usize)> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| (score(query, &item.embedding), i))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.items[a.1].created_seq.cmp(&self.items[b.1].created_seq))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, i)| RetrievedEntry {
                id: self.items[i].id.clone(),
                score,
                kind: self.items[i].kind(),
            })
            .collect())
    }

    /// Highest similarity to any stored item, with the oldest item winning ties.
    pub fn max_similarity(&self, probe: &EmbeddingVector) -> Result<Option<(f64, ItemId)>, MemoryError> {
        Ok(self
            .retrieve_top_k(probe, 1)?
            .into_iter()
            .next()
            .map(|e| (e.score, e.id)))
    }

    /// Copy with every thought removed.
    pub fn chunks_only(&self) -> MemoryStore {
        self.with_thought_prefix(0)
    }

    /// Copy keeping all chunks and the first `budget` thoughts by sequence
    /// number. Sources predate their thoughts, so the prefix is closed under
    /// provenance.
    pub fn with_thought_prefix(&self, budget: usize) -> MemoryStore {
        let mut out = MemoryStore::new(self.dimension);
        let mut kept = 0usize;
        for item in &self.items {
            let result = match &item.payload {
                Payload::Chunk(c) => out.insert_chunk_at(c.clone(), item.embedding.clone(), item.created_seq),
                Payload::Thought(t) => {
                    if kept == budget {
                        continue;
                    }
                    kept += 1;
                    out.insert_thought_at(t.clone(), item.embedding.clone(), item.created_seq)
                }
            };
            result.expect("a prefix of a valid store is valid");
        }
        out.closed = self.closed;
        out
    }

    /// Ids of all thoughts in insertion order.
    pub fn thought_ids(&self) -> Vec<ItemId> {
        self.items
            .iter()
            .filter(|i| i.kind() == ItemKind::Thought)
            .map(|i| i.id.clone())
            .collect()
    }

    pub fn chunk_ids(&self) -> Vec<ItemId> {
        self.items
            .iter()
            .filter(|i| i.kind() == ItemKind::Chunk)
            .map(|i| i.id.clone())
            .collect()
    }
}

fn score(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_document, Document};
    use crate::embedding::{cosine_similarity, hashed_bow_embed};
    use alloc::string::{String, ToString};

    const DIM: usize = 64;

    fn chunk(text: &str) -> (DataChunk, EmbeddingVector) {
        let doc = Document::new("d", text);
        let c = chunk_document(&doc, 1000).unwrap().remove(0);
        let e = hashed_bow_embed(text, DIM).unwrap();
        (c, e)
    }

    fn add_chunk(store: &mut MemoryStore, text: &str) -> ItemId {
        let (c, e) = chunk(text);
        store.insert_chunk(c, e).unwrap()
    }

    fn add_thought(store: &mut MemoryStore, id: &str, text: &str, sources: &[&ItemId]) -> Result<ItemId, MemoryError> {
        let t = Thought {
            thought_id: ItemId::new(id),
            text: text.to_string(),
            query_id: "q".into(),
            immediate_sources: sources.iter().map(|s| (*s).clone()).collect(),
        };
        store.insert_thought(t, hashed_bow_embed(text, DIM).unwrap())
    }

    fn set(ids: &[&ItemId]) -> BTreeSet<ItemId> {
        ids.iter().map(|i| (*i).clone()).collect()
    }

    #[test]
    fn first_insert_gets_seq_zero() {
        let mut s = MemoryStore::new(DIM);
        let id = add_chunk(&mut s, "alpha beta");
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&id).unwrap().created_seq, 0);
    }

    #[test]
    fn duplicate_chunk_is_noop() {
        let mut s = MemoryStore::new(DIM);
        let a = add_chunk(&mut s, "alpha beta");
        let b = add_chunk(&mut s, "alpha beta");
        assert_eq!(a, b);
        assert_eq!(s.len(), 1);
        assert_eq!(s.next_seq(), 1);
    }

    #[test]
    fn sequences_are_monotone() {
        let mut s = MemoryStore::new(DIM);
        for t in ["one", "two", "three"] {
            add_chunk(&mut s, t);
        }
        let seqs: Vec<u64> = s.items().map(|i| i.created_seq).collect();
        assert_eq!(seqs, [0, 1, 2]);
    }

    #[test]
    fn insert_errors() {
        let mut s = MemoryStore::new(DIM);
        let (c, _) = chunk("alpha");
        assert_eq!(
            s.insert_chunk(c, hashed_bow_embed("alpha", 32).unwrap()),
            Err(MemoryError::DimensionMismatch {
                expected: DIM,
                found: 32
            })
        );
        let k = add_chunk(&mut s, "alpha");
        let ghost = ItemId::new("ghost");
        assert_eq!(
            add_thought(&mut s, "t", "x", &[&ghost]),
            Err(MemoryError::UnknownSource(ghost))
        );
        assert_eq!(add_thought(&mut s, "t", "x", &[]), Err(MemoryError::EmptySourceList));
        add_thought(&mut s, "t", "x", &[&k]).unwrap();
        assert_eq!(
            add_thought(&mut s, "t", "y", &[&k]),
            Err(MemoryError::DuplicateId(ItemId::new("t")))
        );
        s.close();
        let (c, e) = chunk("beta");
        assert_eq!(s.insert_chunk(c, e), Err(MemoryError::StoreClosed));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn thought_edges() {
        let mut s = MemoryStore::new(DIM);
        let k1 = add_chunk(&mut s, "k one");
        add_thought(&mut s, "t1", "thought", &[&k1]).unwrap();
        assert_eq!(s.edge_count(), 1);
        let k3 = add_chunk(&mut s, "k three");
        add_thought(&mut s, "t2", "newer thought", &[&ItemId::new("t1"), &k3]).unwrap();
        assert_eq!(s.edge_count(), 3);
    }

    #[test]
    fn root_source_worked_example() {
        let mut s = MemoryStore::new(DIM);
        let k1 = add_chunk(&mut s, "k1 text");
        let k2 = add_chunk(&mut s, "k2 text");
        let k3 = add_chunk(&mut s, "k3 text");
        let k5 = add_chunk(&mut s, "k5 text");
        let old = add_thought(&mut s, "t_old", "old", &[&k1, &k2]).unwrap();
        let new = add_thought(&mut s, "t_new", "new", &[&old, &k3]).unwrap();
        assert_eq!(s.root_source(&k5).unwrap(), set(&[&k5]));
        assert_eq!(s.root_source(&new).unwrap(), set(&[&k1, &k2, &k3]));
        assert_eq!(
            s.root_source(&ItemId::new("nope")),
            Err(MemoryError::UnknownItem(ItemId::new("nope")))
        );
    }

    #[test]
    fn root_source_diamond() {
        let mut s = MemoryStore::new(DIM);
        let k1 = add_chunk(&mut s, "k1");
        let k2 = add_chunk(&mut s, "k2");
        let k3 = add_chunk(&mut s, "k3");
        let ta = add_thought(&mut s, "ta", "a", &[&k1, &k2]).unwrap();
        let tb = add_thought(&mut s, "tb", "b", &[&k2, &k3]).unwrap();
        let tc = add_thought(&mut s, "tc", "c", &[&ta, &tb]).unwrap();
        assert_eq!(s.root_source(&tc).unwrap(), set(&[&k1, &k2, &k3]));
    }

    #[test]
    fn abstraction_levels() {
        let mut s = MemoryStore::new(DIM);
        let k1 = add_chunk(&mut s, "k1");
        let k2 = add_chunk(&mut s, "k2");
        assert_eq!(s.abstraction_level(&k1).unwrap(), 1.0);
        let t = add_thought(&mut s, "t", "t", &[&k1, &k2]).unwrap();
        assert_eq!(s.abstraction_level(&t).unwrap(), 2.0);
        // 1 + (2 + 1) / 2
        let u = add_thought(&mut s, "u", "u", &[&t, &k2]).unwrap();
        assert_eq!(s.abstraction_level(&u).unwrap(), 2.5);
    }

    #[test]
    fn retrieval_self_match_and_saturation() {
        let mut s = MemoryStore::new(DIM);
        add_chunk(&mut s, "red green");
        let b = add_chunk(&mut s, "blue yellow");
        add_chunk(&mut s, "orange purple");
        let q = hashed_bow_embed("blue yellow", DIM).unwrap();
        let hits = s.retrieve_top_k(&q, 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].id, b);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert_eq!(s.retrieve_top_k(&q, 10).unwrap().len(), 3);
        assert!(MemoryStore::new(DIM).retrieve_top_k(&q, 8).unwrap().is_empty());
    }

    #[test]
    fn equal_scores_prefer_older_items() {
        // "left" and "right" land in distinct buckets, so each scores 1/sqrt(2)
        // against the two-word query.
        let dim = 256;
        assert_ne!(
            crate::embedding::hashed_bucket("left", dim),
            crate::embedding::hashed_bucket("right", dim)
        );
        let mut s = MemoryStore::new(dim);
        for text in ["right", "left", "unrelated"] {
            let doc = Document::new(text, text);
            let c = chunk_document(&doc, 10).unwrap().remove(0);
            s.insert_chunk(c, hashed_bow_embed(text, dim).unwrap()).unwrap();
        }
        let q = hashed_bow_embed("left right", dim).unwrap();
        let hits = s.retrieve_top_k(&q, 3).unwrap();
        assert_eq!(hits[0].score, hits[1].score);
        // Brute force: score every item, sort by (score desc, seq asc).
        let mut all: Vec<(f64, u64, String)> = s
            .items()
            .map(|i| {
                (
                    cosine_similarity(&q, &i.embedding).unwrap(),
                    i.created_seq,
                    i.text().to_string(),
                )
            })
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let got: Vec<&str> = hits.iter().map(|h| s.get(&h.id).unwrap().text()).collect();
        let want: Vec<&str> = all.iter().map(|a| a.2.as_str()).collect();
        assert_eq!(got, want);
        assert_eq!(got[0], "right");
    }

    #[test]
    fn thought_prefix_keeps_chunks() {
        let mut s = MemoryStore::new(DIM);
        let k = add_chunk(&mut s, "k");
        let t1 = add_thought(&mut s, "t1", "a", &[&k]).unwrap();
        add_thought(&mut s, "t2", "b", &[&t1]).unwrap();
        let p = s.with_thought_prefix(1);
        assert_eq!(p.chunk_count(), 1);
        assert_eq!(p.thought_ids(), [t1]);
        assert_eq!(p.next_seq(), 2);
        assert_eq!(s.chunks_only().thought_count(), 0);
        assert_eq!(s.with_thought_prefix(99), s);
    }
}
