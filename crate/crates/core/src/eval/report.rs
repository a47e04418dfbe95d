use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pipeline::PipelineConfig;

/// Metrics for one evaluated case (or probe query) within a group such as
/// `cold`, `evolved`, or `budget=4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub case_id: String,
    pub metrics: BTreeMap<String, f64>,
}

/// Per-group means over [`ReportRow::metrics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub count: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: Option<u64>,
    pub config: PipelineConfig,
    /// Experiment-specific inputs and bookkeeping (budgets, partitions).
    pub parameters: BTreeMap<String, Value>,
    pub rows: Vec<ReportRow>,
    pub aggregate: Vec<AggregateRow>,
    /// Derived scalars such as `delta.recall` or `spearman`.
    pub summary: BTreeMap<String, f64>,
    /// Files written for this report; filled in by whoever writes them.
    #[serde(default)]
    pub artifacts: Vec<String>,
}

/// Row count and per-metric (sum, count) for one group.
type GroupSums<'a> = (usize, BTreeMap<&'a str, (f64, usize)>);

/// Means of every metric per group, groups in order of first appearance.
/// A metric missing from some rows of a group is averaged over the rows that
/// have it.
pub fn aggregate_rows(rows: &[ReportRow]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut sums: BTreeMap<&str, GroupSums<'_>> = BTreeMap::new();
    for row in rows {
        let entry = sums.entry(row.group.as_str()).or_insert_with(|| {
            order.push(row.group.as_str());
            (0, BTreeMap::new())
        });
        entry.0 += 1;
        for (k, v) in &row.metrics {
            let m = entry.1.entry(k.as_str()).or_insert((0.0, 0));
            m.0 += v;
            m.1 += 1;
        }
    }
    order
        .into_iter()
        .map(|g| {
            let (count, metrics) = &sums[g];
            AggregateRow {
                group: g.into(),
                count: *count,
                metrics: metrics.iter().map(|(k, (s, n))| ((*k).into(), s / *n as f64)).collect(),
            }
        })
        .collect()
}

impl ExperimentReport {
    pub(crate) fn new(experiment: &str, config: PipelineConfig, rows: Vec<ReportRow>) -> Self {
        Self {
            experiment: experiment.into(),
            seed: None,
            config,
            parameters: BTreeMap::new(),
            aggregate: aggregate_rows(&rows),
            rows,
            summary: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn group(&self, name: &str) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.group == name)
    }

    /// Mean of `metric` in `group`.
    pub fn mean(&self, group: &str, metric: &str) -> Option<f64> {
        self.group(group)?.metrics.get(metric).copied()
    }

    /// Whether the stored aggregates match a fresh recomputation from the
    /// rows to within `tolerance`.
    pub fn aggregates_consistent(&self, tolerance: f64) -> bool {
        let fresh = aggregate_rows(&self.rows);
        fresh.len() == self.aggregate.len()
            && fresh.iter().zip(&self.aggregate).all(|(a, b)| {
                a.group == b.group
                    && a.count == b.count
                    && a.metrics.len() == b.metrics.len()
                    && a.metrics
                        .iter()
                        .zip(&b.metrics)
                        .all(|((ka, va), (kb, vb))| ka == kb && (va - vb).abs() <= tolerance)
            })
    }
}
