//! Undirected simple graphs in CSR form and the operators derived from them.
//!
//! [`CsrGraph`] stores the base graph without self-loops, both arc
//! directions explicitly. [`PropMatrix`] stores a weighted operator over the
//! self-looped graph: the renormalized convolution matrix
//! `D̃^{-1/2} (A + I) D̃^{-1/2}`, its Laplacian `I - P̃`, or the lazy walk
//! `(I + P̃) / 2`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node {node} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("edge ({u}, {v}) listed more than once")]
    DuplicateEdge { u: usize, v: usize },
}

/// Immutable undirected simple graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    num_nodes: usize,
    num_edges: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    degrees: Vec<usize>,
}

impl CsrGraph {
    /// Builds a graph from undirected edges, each listed once in either
    /// orientation.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut degrees = vec![0usize; num_nodes];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= num_nodes {
                    return Err(GraphError::NodeOutOfRange { node, num_nodes });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { node: u });
            }
            degrees[u] += 1;
            degrees[v] += 1;
        }

        let mut row_offsets = vec![0usize; num_nodes + 1];
        for (i, d) in degrees.iter().enumerate() {
            row_offsets[i + 1] = row_offsets[i] + d;
        }
        let mut cursor = row_offsets.clone();
        let mut col_indices = vec![0usize; 2 * edges.len()];
        for &(u, v) in edges {
            col_indices[cursor[u]] = v;
            cursor[u] += 1;
            col_indices[cursor[v]] = u;
            cursor[v] += 1;
        }
        for u in 0..num_nodes {
            let row = &mut col_indices[row_offsets[u]..row_offsets[u + 1]];
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                let v = w[0];
                return Err(GraphError::DuplicateEdge { u: u.min(v), v: u.max(v) });
            }
        }

        Ok(Self {
            num_nodes,
            num_edges: edges.len(),
            row_offsets,
            col_indices,
            degrees,
        })
    }

    /// Graph with no edges.
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            num_edges: 0,
            row_offsets: vec![0; num_nodes + 1],
            col_indices: Vec::new(),
            degrees: vec![0; num_nodes],
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    #[inline]
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node]
    }

    #[inline]
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    #[inline]
    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Sorted neighbours of `node`.
    #[inline]
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Connected-component label per node; labels are dense and ordered by
    /// the smallest node in each component.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.num_nodes {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Breadth-first connectivity test. The empty graph counts as connected.
    pub fn is_connected(&self) -> bool {
        self.component_labels().iter().all(|&c| c == 0)
    }

    /// Nodes of the largest connected component, ascending.
    pub fn largest_component(&self) -> Vec<usize> {
        let labels = self.component_labels();
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; count];
        for &c in &labels {
            sizes[c] += 1;
        }
        let best = (0..count).max_by_key(|&c| (sizes[c], usize::MAX - c));
        match best {
            Some(b) => (0..self.num_nodes).filter(|&u| labels[u] == b).collect(),
            None => Vec::new(),
        }
    }

    /// Subgraph induced by `nodes` (ascending, distinct), relabelled to
    /// `0..nodes.len()` in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> CsrGraph {
        let mut new_id = vec![usize::MAX; self.num_nodes];
        for (i, &u) in nodes.iter().enumerate() {
            new_id[u] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .filter(|&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
            .map(|(u, v)| (new_id[u], new_id[v]))
            .collect();
        CsrGraph::from_edges(nodes.len(), &edges).expect("induced subgraph of a valid graph is valid")
    }
}

/// Builds a validated graph from an edge list.
pub fn load_graph(edges: &[(usize, usize)], num_nodes: usize) -> Result<CsrGraph, GraphError> {
    CsrGraph::from_edges(num_nodes, edges)
}

/// Which operator a [`PropMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropKind {
    /// `P̃ = D̃^{-1/2} Ã D̃^{-1/2}`
    Renormalized,
    /// `L̃ = I - P̃`
    Laplacian,
    /// `(I + P̃) / 2`
    LazyWalk,
}

/// Symmetric weighted operator over the self-looped graph.
///
/// The sparsity pattern is that of `A + I`: each row holds the node itself
/// and its neighbours, sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PropMatrix {
    kind: PropKind,
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl PropMatrix {
    fn build(g: &CsrGraph, kind: PropKind) -> Self {
        let n = g.num_nodes();
        let nnz = g.col_indices().len() + n;
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for i in 0..n {
            let di = (g.degree(i) + 1) as f64;
            let mut self_done = false;
            let push = |j: usize, col: &mut Vec<usize>, vals: &mut Vec<f64>| {
                let dj = (g.degree(j) + 1) as f64;
                // (di * dj) is an exact integer product, so (i, j) and (j, i)
                // come out bit-identical.
                let p = 1.0 / libm::sqrt(di * dj);
                let diag = i == j;
                let v = match kind {
                    PropKind::Renormalized => p,
                    PropKind::Laplacian => (if diag { 1.0 } else { 0.0 }) - p,
                    PropKind::LazyWalk => ((if diag { 1.0 } else { 0.0 }) + p) * 0.5,
                };
                col.push(j);
                vals.push(v);
            };
            for &j in g.neighbors(i) {
                if !self_done && j > i {
                    push(i, &mut col_indices, &mut values);
                    self_done = true;
                }
                push(j, &mut col_indices, &mut values);
            }
            if !self_done {
                push(i, &mut col_indices, &mut values);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            kind,
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn kind(&self) -> PropKind {
        self.kind
    }

    /// Side length of the (square) operator.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    #[inline]
    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Stored value at `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `out = self * h` for a dense `h` with `dim()` rows.
    ///
    /// Each output row is reduced in the fixed column order of the pattern.
    pub fn multiply_into(&self, h: &Matrix, out: &mut Matrix) {
        assert_eq!(h.rows(), self.n, "operator/matrix dimension mismatch");
        assert_eq!(out.shape(), h.shape(), "output shape mismatch");
        let cols = h.cols();
        let src = h.as_slice();
        let dst = out.as_mut_slice();
        for i in 0..self.n {
            let acc = &mut dst[i * cols..(i + 1) * cols];
            acc.iter_mut().for_each(|v| *v = 0.0);
            for e in self.row_offsets[i]..self.row_offsets[i + 1] {
                let w = self.values[e];
                let j = self.col_indices[e];
                let hj = &src[j * cols..(j + 1) * cols];
                for (a, b) in acc.iter_mut().zip(hj) {
                    *a += w * b;
                }
            }
        }
    }

    pub fn multiply(&self, h: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(h.rows(), h.cols());
        self.multiply_into(h, &mut out);
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "operator/vector dimension mismatch");
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }
}

/// Renormalized convolution operator `P̃` of `g`.
pub fn renormalized_operator(g: &CsrGraph) -> PropMatrix {
    PropMatrix::build(g, PropKind::Renormalized)
}

/// Normalized Laplacian `L̃ = I - P̃` of the self-looped graph.
pub fn laplacian_operator(g: &CsrGraph) -> PropMatrix {
    PropMatrix::build(g, PropKind::Laplacian)
}

/// Lazy walk operator `(I + P̃) / 2`.
pub fn lazy_walk_operator(g: &CsrGraph) -> PropMatrix {
    PropMatrix::build(g, PropKind::LazyWalk)
}

/// Keeps each undirected edge independently with probability `1 - drop_rate`.
///
/// Both arcs of an edge go together. The caller rebuilds the operator from
/// the sample so renormalization sees the sampled degrees.
pub fn dropedge_sample<R: Rng + ?Sized>(g: &CsrGraph, drop_rate: f64, rng: &mut R) -> CsrGraph {
    assert!((0.0..1.0).contains(&drop_rate), "drop rate must lie in [0, 1)");
    if drop_rate == 0.0 {
        return g.clone();
    }
    let kept: Vec<(usize, usize)> = g.edges().filter(|_| rng.random::<f64>() >= drop_rate).collect();
    CsrGraph::from_edges(g.num_nodes(), &kept).expect("subset of a valid edge set is valid")
}

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability `extra_edge_prob`.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> CsrGraph {
    let mut edges = Vec::new();
    let mut parent = alloc::vec![usize::MAX; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        parent[v] = u;
        edges.push((u, v));
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < extra_edge_prob && parent[v] != u {
                edges.push((u, v));
            }
        }
    }
    CsrGraph::from_edges(n, &edges).expect("generated edges are simple")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn triangle() -> CsrGraph {
        load_graph(&[(0, 1), (1, 2), (2, 0)], 3).unwrap()
    }

    #[test]
    fn single_edge_graph() {
        let g = load_graph(&[(0, 1)], 2).unwrap();
        assert_eq!(g.degrees(), &[1, 1]);
        assert_eq!(g.col_indices().len(), 2);
        assert_eq!(g.row_offsets()[2], 2 * g.num_edges());
    }

    #[test]
    fn triangle_is_symmetric() {
        let g = triangle();
        assert_eq!(g.degrees(), &[2, 2, 2]);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(g.has_edge(u, v), u != v);
            }
        }
    }

    #[test]
    fn validation_errors_are_distinct() {
        assert_eq!(
            load_graph(&[(0, 2)], 2),
            Err(GraphError::NodeOutOfRange { node: 2, num_nodes: 2 })
        );
        assert_eq!(load_graph(&[(1, 1)], 2), Err(GraphError::SelfLoop { node: 1 }));
        assert_eq!(
            load_graph(&[(0, 1), (1, 0)], 2),
            Err(GraphError::DuplicateEdge { u: 0, v: 1 })
        );
    }

    #[test]
    fn renormalized_single_edge_and_triangle() {
        let p = renormalized_operator(&load_graph(&[(0, 1)], 2).unwrap()).to_dense();
        assert_eq!(p, Matrix::filled(2, 2, 0.5));

        let p = renormalized_operator(&triangle());
        assert_eq!(p.nnz(), 9);
        for &v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_single_edge_and_triangle() {
        let l = laplacian_operator(&load_graph(&[(0, 1)], 2).unwrap()).to_dense();
        assert_eq!(l, Matrix::from_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]).unwrap());

        let l = laplacian_operator(&triangle()).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((l.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_nodes_get_unit_self_loops() {
        let p = renormalized_operator(&CsrGraph::empty(3));
        assert_eq!(p.to_dense(), Matrix::identity(3));
        let h = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(p.multiply(&h), h);
    }

    #[test]
    fn dropedge_rate_zero_is_identity_and_seed_is_reproducible() {
        let mut r = rng::stream(1, 0);
        let g = random_connected_graph(12, 0.4, &mut r);
        assert_eq!(dropedge_sample(&g, 0.0, &mut r), g);

        let t = triangle();
        let a = dropedge_sample(&t, 0.5, &mut rng::stream(9, 2));
        let b = dropedge_sample(&t, 0.5, &mut rng::stream(9, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn dropedge_retained_count_within_three_sigma() {
        // 10,000 edges: a long cycle of 10,000 nodes.
        let n = 10_000;
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let g = load_graph(&edges, n).unwrap();
        assert_eq!(g.num_edges(), 10_000);
        let sample = dropedge_sample(&g, 0.5, &mut rng::stream(3, 2));
        let sigma = (10_000.0f64 * 0.25).sqrt();
        let kept = sample.num_edges() as f64;
        assert!((kept - 5_000.0).abs() <= 3.0 * sigma, "kept {kept}");
        for (u, v) in sample.edges() {
            assert!(g.has_edge(u, v) && sample.has_edge(v, u));
        }
    }

    #[test]
    fn largest_component_and_subgraph() {
        let g = load_graph(&[(0, 1), (2, 3), (3, 4), (5, 2)], 7).unwrap();
        assert!(!g.is_connected());
        let lcc = g.largest_component();
        assert_eq!(lcc, vec![2, 3, 4, 5]);
        let sub = g.induced_subgraph(&lcc);
        assert_eq!(sub.num_nodes(), 4);
        assert_eq!(sub.num_edges(), 3);
        assert!(sub.is_connected());
    }

    fn arb_graph() -> impl Strategy<Value = CsrGraph> {
        (1usize..13, any::<u64>(), 0.0f64..1.0).prop_map(|(n, seed, p)| {
            let mut r = rng::stream(seed, 0);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if r.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            load_graph(&edges, n).unwrap()
        })
    }

    fn dense_renormalized(g: &CsrGraph) -> Matrix {
        let n = g.num_nodes();
        let d: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
        Matrix::from_fn(n, n, |i, j| {
            let a = if i == j || g.has_edge(i, j) { 1.0 } else { 0.0 };
            a / d[i].sqrt() / d[j].sqrt()
        })
    }

    proptest! {
        #[test]
        fn renormalized_matches_dense_and_is_symmetric(g in arb_graph()) {
            let p = renormalized_operator(&g);
            let dense = p.to_dense();
            prop_assert!(dense.max_abs_diff(&dense_renormalized(&g)) < 1e-14);
            for i in 0..g.num_nodes() {
                for j in 0..g.num_nodes() {
                    prop_assert_eq!(dense.get(i, j).to_bits(), dense.get(j, i).to_bits());
                }
            }
        }

        #[test]
        fn sqrt_degree_vector_is_fixed(g in arb_graph()) {
            let p = renormalized_operator(&g);
            let v: Vec<f64> = g.degrees().iter().map(|&d| ((d + 1) as f64).sqrt()).collect();
            let pv = p.apply(&v);
            for (a, b) in pv.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn laplacian_plus_renormalized_is_identity(g in arb_graph()) {
            let p = renormalized_operator(&g);
            let l = laplacian_operator(&g);
            prop_assert_eq!(p.col_indices(), l.col_indices());
            for i in 0..g.num_nodes() {
                for (e, j) in (p.row_offsets()[i]..p.row_offsets()[i + 1]).zip(p.col_indices()[p.row_offsets()[i]..].iter()) {
                    let want = if i == *j { 1.0 } else { 0.0 };
                    prop_assert_eq!(p.values()[e] + l.values()[e], want);
                }
            }
        }

        #[test]
        fn edges_round_trip(g in arb_graph()) {
            let edges: Vec<_> = g.edges().collect();
            prop_assert_eq!(edges.len(), g.num_edges());
            prop_assert_eq!(load_graph(&edges, g.num_nodes()).unwrap(), g);
        }
    }
}
