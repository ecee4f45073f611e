//! Planted-partition graphs with class-correlated bag-of-words features.

use std::sync::Arc;

use gcnii_core::rng;
use gcnii_core::{CsrGraph, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_rows_l1, DatasetBundle, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Edge probability inside a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    /// Chance that a node carries each word of its own class block.
    pub p_signal: f64,
    /// Chance of each other word.
    pub p_noise: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 600,
            classes: 4,
            features: 80,
            p_in: 0.02,
            p_out: 0.002,
            p_signal: 0.12,
            p_noise: 0.04,
            train_per_class: 10,
            val: 150,
            test: 300,
            seed: 0,
        }
    }
}

/// Generates a dataset with one split: `train_per_class` nodes of each
/// class, then `val` and `test` nodes from the rest.
pub fn planted_partition(spec: &SyntheticSpec) -> DatasetBundle {
    assert!(spec.classes >= 1 && spec.nodes >= spec.classes);
    let mut r = rng::stream(spec.seed, 17);
    let labels: Vec<i64> = (0..spec.nodes).map(|v| (v % spec.classes) as i64).collect();

    let mut edges = Vec::new();
    for u in 0..spec.nodes {
        for v in (u + 1)..spec.nodes {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = CsrGraph::from_edges(spec.nodes, &edges).expect("generated edges are simple");

    let block = (spec.features / spec.classes).max(1);
    let mut features = Matrix::from_fn(spec.nodes, spec.features, |v, f| {
        let own = f / block == labels[v] as usize;
        let p = if own { spec.p_signal } else { spec.p_noise };
        if r.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    });
    normalize_rows_l1(&mut features);

    let mut order: Vec<usize> = (0..spec.nodes).collect();
    order.shuffle(&mut r);
    let mut per_class = vec![0; spec.classes];
    let (mut train, mut rest) = (Vec::new(), Vec::new());
    for v in order {
        let c = labels[v] as usize;
        if per_class[c] < spec.train_per_class {
            per_class[c] += 1;
            train.push(v);
        } else {
            rest.push(v);
        }
    }
    let val: Vec<usize> = rest.iter().copied().take(spec.val).collect();
    let test: Vec<usize> = rest.iter().copied().skip(spec.val).take(spec.test).collect();

    DatasetBundle {
        name: format!("planted-{}x{}-seed{}", spec.nodes, spec.classes, spec.seed),
        graph,
        features: Arc::new(features),
        labels,
        num_classes: spec.classes,
        splits: vec![Split { train, val, test }],
    }
}
