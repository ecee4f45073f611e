//! Test accuracy grouped by node degree in powers of two.

use gcnii_core::CsrGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("degree buckets need a nonempty test set")]
pub struct EmptyTestSet;

/// Nodes with degree in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBucket {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub correct: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

impl DegreeBucket {
    pub fn label(&self) -> String {
        format!("[{},{})", self.lo, self.hi)
    }
}

/// Index `i` of the range `[2^i, 2^(i+1))` holding `degree`; `None` for
/// isolated nodes, which the ranges do not cover.
pub fn bucket_index(degree: usize) -> Option<usize> {
    (degree > 0).then(|| degree.ilog2() as usize)
}

/// Position in a bucket list for `degree`: 0 for isolated nodes, then `i + 1` for
/// degrees in `[2^i, 2^(i+1))`.
pub fn bucket_position(degree: usize) -> usize {
    bucket_index(degree).map_or(0, |i| i + 1)
}

/// Range `[lo, hi)` of the bucket at `position`.
pub fn bucket_range(position: usize) -> (usize, usize) {
    if position == 0 {
        (0, 1)
    } else {
        (1 << (position - 1), 1 << position)
    }
}

/// Accuracy per degree bucket over `test`. The leading bucket holds
/// degree-0 nodes; buckets run up to the largest degree in the test set,
/// empty ones included.
pub fn degree_bucket_accuracy(
    predictions: &[usize],
    labels: &[usize],
    graph: &CsrGraph,
    test: &[usize],
) -> Result<Vec<DegreeBucket>, EmptyTestSet> {
    let top = test
        .iter()
        .map(|&v| bucket_position(graph.degree(v)))
        .max()
        .ok_or(EmptyTestSet)?;
    let mut buckets: Vec<DegreeBucket> = (0..=top)
        .map(|p| {
            let (lo, hi) = bucket_range(p);
            DegreeBucket {
                lo,
                hi,
                count: 0,
                correct: 0,
                accuracy: None,
            }
        })
        .collect();
    for &v in test {
        let b = &mut buckets[bucket_position(graph.degree(v))];
        b.count += 1;
        if predictions[v] == labels[v] {
            b.correct += 1;
        }
    }
    for b in &mut buckets {
        if b.count > 0 {
            b.accuracy = Some(b.correct as f64 / b.count as f64);
        }
    }
    Ok(buckets)
}

/// Adds per-bucket counts of several runs over the same bucket layout
/// (pads the shorter list).
pub fn merge_buckets(runs: &[Vec<DegreeBucket>]) -> Vec<DegreeBucket> {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|p| {
            let (lo, hi) = bucket_range(p);
            let (count, correct) = runs
                .iter()
                .filter_map(|r| r.get(p))
                .fold((0, 0), |(c, k), b| (c + b.count, k + b.correct));
            DegreeBucket {
                lo,
                hi,
                count,
                correct,
                accuracy: (count > 0).then(|| correct as f64 / count as f64),
            }
        })
        .collect()
}
