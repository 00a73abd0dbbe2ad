//! Embeddings and top-k cosine retrieval.
//!
//! Vectors are L2-normalized on insertion so cosine similarity is a dot
//! product. Results are ordered by descending similarity, ties broken by
//! ascending row id.

mod embed;
mod graph;
mod persist;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::mock_embedding;
pub use graph::GraphIndex;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot build an index over an empty table")]
    EmptyTable,
    #[error("duplicate row id {0} in index")]
    DuplicateRowId(u64),
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("index file is corrupt: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A dense embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Embedding, VectorError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|x| x * x).sum::<f32>().sqrt()
    }

    pub fn normalized(mut self) -> Embedding {
        normalize(&mut self.0);
        self
    }
}

pub(crate) fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two arbitrary (not necessarily normalized) vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { m: 16, ef_construction: 200, ef_search: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IndexStrategy {
    #[default]
    ExactScan,
    Graph(GraphParams),
}

/// One retrieval hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row_id: u64,
    pub similarity: f32,
}

/// Descending similarity, then ascending row id.
pub(crate) fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.row_id.cmp(&b.row_id))
}

/// A set of normalized embeddings keyed by row id.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
    strategy: IndexStrategy,
    graph: Option<GraphIndex>,
}

impl VectorIndex {
    /// Builds an index. `seed` drives the graph's level assignment.
    pub fn build(
        entries: Vec<(u64, Embedding)>,
        strategy: IndexStrategy,
        seed: u64,
    ) -> Result<VectorIndex, VectorError> {
        let first = entries.first().ok_or(VectorError::EmptyTable)?;
        let dim = first.1.dim();
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (id, e) in entries {
            if e.dim() != dim {
                return Err(VectorError::DimensionMismatch { expected: dim, got: e.dim() });
            }
            if !seen.insert(id) {
                return Err(VectorError::DuplicateRowId(id));
            }
            ids.push(id);
            data.extend_from_slice(e.normalized().as_slice());
        }
        let graph = match strategy {
            IndexStrategy::ExactScan => None,
            IndexStrategy::Graph(params) => Some(GraphIndex::build(&data, dim, params, seed)),
        };
        Ok(VectorIndex { dim, ids, data, strategy, graph })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn strategy(&self) -> IndexStrategy {
        self.strategy
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.ids
    }

    pub(crate) fn vector(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn graph(&self) -> Option<&GraphIndex> {
        self.graph.as_ref()
    }

    fn prepare_query(&self, query: &[f32]) -> Result<Vec<f32>, VectorError> {
        if query.len() != self.dim {
            return Err(VectorError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let mut q = query.to_vec();
        normalize(&mut q);
        Ok(q)
    }

    /// Top `k` entries by cosine similarity; length `min(k, len)`.
    /// Exact for [`IndexStrategy::ExactScan`], approximate for graphs.
    pub fn top_k(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, VectorError> {
        let q = self.prepare_query(query)?;
        match &self.graph {
            None => Ok(self.scan(&q, k)),
            Some(g) => Ok(g
                .search(&self.data, self.dim, &q, k)
                .into_iter()
                .map(|(pos, sim)| Neighbor { row_id: self.ids[pos], similarity: sim })
                .collect::<Vec<_>>()
                .sorted()),
        }
    }

    /// Exact top-k regardless of strategy.
    pub fn exact_top_k(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, VectorError> {
        let q = self.prepare_query(query)?;
        Ok(self.scan(&q, k))
    }

    /// Similarity of the query against every entry, in index order. This is
    /// the materialized pairwise form a cross join produces.
    pub fn all_similarities(&self, query: &[f32]) -> Result<Vec<Neighbor>, VectorError> {
        let q = self.prepare_query(query)?;
        Ok((0..self.len())
            .map(|i| Neighbor { row_id: self.ids[i], similarity: dot(&q, self.vector(i)) })
            .collect())
    }

    fn scan(&self, q: &[f32], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..self.len())
            .map(|i| Neighbor { row_id: self.ids[i], similarity: dot(q, self.vector(i)) })
            .collect();
        let k = k.min(all.len());
        if k == 0 {
            return Vec::new();
        }
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank_order);
            all.truncate(k);
        }
        all.sort_by(rank_order);
        all
    }
}

trait SortedNeighbors {
    fn sorted(self) -> Self;
}

impl SortedNeighbors for Vec<Neighbor> {
    fn sorted(mut self) -> Self {
        self.sort_by(rank_order);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn hand_index() -> VectorIndex {
        let entries = vec![
            (10, e(&[1.0, 0.0, 0.0])),
            (11, e(&[0.0, 1.0, 0.0])),
            (12, e(&[0.7, 0.7, 0.0])),
            (13, e(&[0.9, 0.1, 0.0])),
            (14, e(&[-1.0, 0.0, 0.0])),
        ];
        VectorIndex::build(entries, IndexStrategy::ExactScan, 0).unwrap()
    }

    #[test]
    fn top3_matches_brute_force_sort() {
        let index = hand_index();
        let q = [1.0, 0.2, 0.0];
        // Oracle: cosine against each raw vector, full sort.
        let raw = [
            (10u64, [1.0f32, 0.0, 0.0]),
            (11, [0.0, 1.0, 0.0]),
            (12, [0.7, 0.7, 0.0]),
            (13, [0.9, 0.1, 0.0]),
            (14, [-1.0, 0.0, 0.0]),
        ];
        let mut oracle: Vec<(u64, f32)> = raw.iter().map(|(id, v)| (*id, cosine(&q, v))).collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<u64> = index.top_k(&q, 3).unwrap().iter().map(|n| n.row_id).collect();
        let want: Vec<u64> = oracle.iter().take(3).map(|x| x.0).collect();
        assert_eq!(got, want);
        assert_eq!(got, vec![13, 10, 12]);
    }

    #[test]
    fn k_larger_than_index_returns_all_sorted() {
        let hits = hand_index().top_k(&[0.0, 1.0, 0.0], 50).unwrap();
        assert_eq!(hits.len(), 5);
        assert!(hits.windows(2).all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn self_similarity_first() {
        let hits = hand_index().top_k(&[0.7, 0.7, 0.0], 1).unwrap();
        assert_eq!(hits[0].row_id, 12);
        assert!((hits[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_break_by_row_id() {
        let entries = vec![(7, e(&[1.0, 0.0])), (3, e(&[1.0, 0.0])), (5, e(&[1.0, 0.0]))];
        let index = VectorIndex::build(entries, IndexStrategy::ExactScan, 0).unwrap();
        let ids: Vec<u64> = index.top_k(&[1.0, 0.0], 2).unwrap().iter().map(|n| n.row_id).collect();
        assert_eq!(ids, vec![3, 5]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            VectorIndex::build(vec![], IndexStrategy::ExactScan, 0),
            Err(VectorError::EmptyTable)
        ));
        assert!(matches!(
            hand_index().top_k(&[1.0, 0.0], 1),
            Err(VectorError::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(matches!(
            VectorIndex::build(vec![(1, e(&[1.0])), (1, e(&[0.5]))], IndexStrategy::ExactScan, 0),
            Err(VectorError::DuplicateRowId(1))
        ));
        assert!(Embedding::new(vec![f32::NAN]).is_err());
    }
}
