//! Root-source coverage precision/recall and ROUGE-L F1.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{ItemId, MemoryError, MemoryStore};
use crate::tokenize::lowercase_tokens;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("gold chunk set is empty")]
    EmptyGoldSet,
    #[error("retrieved set is empty; precision is undefined")]
    EmptyRetrievedSet,
    #[error("reference text has no tokens")]
    EmptyReference,
}

impl From<MemoryError> for MetricsError {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::UnknownItem(id) | MemoryError::UnknownSource(id) => MetricsError::UnknownItem(id),
            other => unreachable!("read-only lookups only fail on unknown ids, got {other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mapped_chunks: BTreeSet<ItemId>,
    pub gold_chunks: BTreeSet<ItemId>,
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Maps the retrieved items to their root-source chunks and scores that set
/// against the gold chunks.
pub fn coverage<'a, I>(
    retrieved: I,
    gold: &BTreeSet<ItemId>,
    store: &MemoryStore,
) -> Result<CoverageResult, MetricsError>
where
    I: IntoIterator<Item = &'a ItemId>,
{
    let retrieved: Vec<&ItemId> = retrieved.into_iter().collect();
    for id in retrieved.iter().copied().chain(gold.iter()) {
        if !store.contains(id) {
            return Err(MetricsError::UnknownItem(id.clone()));
        }
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyGoldSet);
    }
    if retrieved.is_empty() {
        return Err(MetricsError::EmptyRetrievedSet);
    }
    let mapped = store.root_source_union(retrieved)?;
    let hits = mapped.intersection(gold).count() as f64;
    let precision = hits / mapped.len() as f64;
    let recall = hits / gold.len() as f64;
    Ok(CoverageResult {
        precision,
        recall,
        f1: harmonic_f1(precision, recall),
        mapped_chunks: mapped,
        gold_chunks: gold.clone(),
    })
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over lowercased whitespace tokens, with the LCS taken over the
/// whole text.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> Result<f64, MetricsError> {
    let reference = lowercase_tokens(reference);
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let candidate = lowercase_tokens(candidate);
    let l = lcs_len(&candidate, &reference);
    if l == 0 {
        return Ok(0.0);
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied values share the mean of their positions.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when fewer
/// than two points or either column is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / libm::sqrt(vx * vy))
}

/// Arithmetic mean, 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_document, Document};
    use crate::embedding::hashed_bow_embed;
    use crate::memory::Thought;
    use alloc::format;
    use alloc::string::String;
    use proptest::prelude::*;

    /// Exponential-time LCS by direct recursion; only for short inputs.
    fn lcs_oracle(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        if a[0] == b[0] {
            1 + lcs_oracle(&a[1..], &b[1..])
        } else {
            lcs_oracle(&a[1..], b).max(lcs_oracle(a, &b[1..]))
        }
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_f1("the cat sat", "the cat sat").unwrap(), 1.0);
        assert_eq!(rouge_l_f1("alpha beta", "gamma delta").unwrap(), 0.0);
        let f = rouge_l_f1("the cat sat", "the cat ran").unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert!((f - 0.6667).abs() < 1e-4);
        assert_eq!(rouge_l_f1("The CAT", "the cat").unwrap(), 1.0);
        assert_eq!(rouge_l_f1("x", "  "), Err(MetricsError::EmptyReference));
        assert_eq!(rouge_l_f1("", "ref").unwrap(), 0.0);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 1.0]), None);
        // Ranks of ys with a tie: [1.5, 1.5, 3]; pearson against [1, 2, 3].
        let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 9.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    fn store_with_chunks(n: usize) -> (MemoryStore, Vec<ItemId>) {
        let mut s = MemoryStore::new(32);
        let mut ids = Vec::new();
        for i in 0..n {
            let text = format!("chunk{i}");
            let c = chunk_document(&Document::new(format!("d{i}"), text.clone()), 10)
                .unwrap()
                .remove(0);
            ids.push(s.insert_chunk(c, hashed_bow_embed(&text, 32).unwrap()).unwrap());
        }
        (s, ids)
    }

    fn thought(s: &mut MemoryStore, id: &str, sources: &[ItemId]) -> ItemId {
        let t = Thought {
            thought_id: ItemId::new(id),
            text: id.into(),
            query_id: "q".into(),
            immediate_sources: sources.to_vec(),
        };
        s.insert_thought(t, hashed_bow_embed(id, 32).unwrap()).unwrap()
    }

    #[test]
    fn coverage_raw_window() {
        let (s, k) = store_with_chunks(6);
        let gold: BTreeSet<ItemId> = k[1..5].iter().cloned().collect();
        let r = coverage(&[k[1].clone(), k[2].clone()], &gold, &s).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        let all = coverage(gold.iter(), &gold, &s).unwrap();
        assert_eq!((all.precision, all.recall, all.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn coverage_through_thoughts() {
        let (mut s, k) = store_with_chunks(6);
        let t23 = thought(&mut s, "t23", &[k[1].clone(), k[2].clone()]);
        let t45 = thought(&mut s, "t45", &[k[3].clone(), k[4].clone()]);
        let gold: BTreeSet<ItemId> = k[1..5].iter().cloned().collect();
        let r = coverage(&[t23, t45], &gold, &s).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        assert_eq!(r.mapped_chunks, gold);
    }

    #[test]
    fn coverage_errors() {
        let (s, k) = store_with_chunks(2);
        let gold: BTreeSet<ItemId> = k.iter().cloned().collect();
        let none: [ItemId; 0] = [];
        assert_eq!(coverage(&none, &gold, &s), Err(MetricsError::EmptyRetrievedSet));
        assert_eq!(coverage(&k, &BTreeSet::new(), &s), Err(MetricsError::EmptyGoldSet));
        let ghost = ItemId::new("ghost");
        assert_eq!(coverage([&ghost], &gold, &s), Err(MetricsError::UnknownItem(ghost)));
    }

    #[test]
    fn rouge_matches_oracle_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vocab = ["a", "b", "c", "d", "e", "f"];
        for _ in 0..100 {
            let gen = |rng: &mut rand_chacha::ChaCha8Rng, min: usize| {
                let n = rng.gen_range(min..=20);
                (0..n)
                    .map(|_| String::from(vocab[rng.gen_range(0..vocab.len())]))
                    .collect::<Vec<_>>()
            };
            let a = gen(&mut rng, 0);
            let b = gen(&mut rng, 1);
            let l = lcs_oracle_memo(&a, &b);
            assert_eq!(lcs_len(&a, &b), l);
            let want = if l == 0 {
                0.0
            } else {
                let (p, r) = (l as f64 / a.len() as f64, l as f64 / b.len() as f64);
                2.0 * p * r / (p + r)
            };
            assert_eq!(rouge_l_f1(&a.join(" "), &b.join(" ")).unwrap(), want);
        }
    }

    /// The recursive oracle with a memo table so 20-token inputs stay fast.
    fn lcs_oracle_memo(a: &[String], b: &[String]) -> usize {
        fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len()]; a.len()];
        go(a, b, 0, 0, &mut memo)
    }

    #[test]
    fn memo_oracle_agrees_with_plain_recursion() {
        let a: Vec<String> = "a b c a b".split(' ').map(String::from).collect();
        let b: Vec<String> = "b a c b".split(' ').map(String::from).collect();
        assert_eq!(lcs_oracle(&a, &b), lcs_oracle_memo(&a, &b));
    }

    proptest! {
        #[test]
        fn rouge_self_is_one(words in proptest::collection::vec("[a-z]{1,5}", 1..20)) {
            prop_assert_eq!(rouge_l_f1(&words.join(" "), &words.join(" ")).unwrap(), 1.0);
        }

        #[test]
        fn coverage_recall_monotone_and_bounded(
            edges in proptest::collection::vec(proptest::collection::vec(0usize..100, 1..4), 0..12),
            picks in proptest::collection::vec(0usize..100, 1..8),
            gold_mask in proptest::collection::vec(any::<bool>(), 8),
        ) {
            let (mut s, k) = store_with_chunks(8);
            let mut all = k.clone();
            for (i, srcs) in edges.iter().enumerate() {
                let sources: Vec<ItemId> = srcs.iter().map(|j| all[j % all.len()].clone()).collect();
                all.push(thought(&mut s, &format!("t{i}"), &sources));
            }
            let mut gold: BTreeSet<ItemId> =
                k.iter().zip(&gold_mask).filter(|(_, m)| **m).map(|(id, _)| id.clone()).collect();
            if gold.is_empty() {
                gold.insert(k[0].clone());
            }
            let mut retrieved = Vec::new();
            let mut last_recall = 0.0;
            for p in picks {
                let id = all[p % all.len()].clone();
                let before = if retrieved.is_empty() { None } else { Some(coverage(&retrieved, &gold, &s).unwrap()) };
                retrieved.push(id.clone());
                let r = coverage(&retrieved, &gold, &s).unwrap();
                prop_assert!((0.0..=1.0).contains(&r.precision));
                prop_assert!((0.0..=1.0).contains(&r.recall));
                prop_assert!(r.recall >= last_recall);
                last_recall = r.recall;
                if let Some(before) = before {
                    if s.root_source(&id).unwrap().is_subset(&gold) {
                        prop_assert!(r.precision >= before.precision);
                    }
                }
            }
        }
    }
}
