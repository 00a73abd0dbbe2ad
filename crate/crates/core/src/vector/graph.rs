//! Hierarchical navigable small-world graph over normalized vectors.
//!
//! Node positions index into the owning [`super::VectorIndex`]'s flat data
//! buffer; the graph stores only adjacency. Level assignment is seeded so
//! builds are reproducible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{dot, GraphParams};
use crate::value::{mix64, unit_f64};

#[derive(Debug, Clone, Copy)]
struct Scored {
    sim: f32,
    pos: u32,
}

// Greater = more similar; ties prefer the lower position.
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then(other.pos.cmp(&self.pos))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    pub(crate) params: GraphParams,
    pub(crate) seed: u64,
    pub(crate) entry: u32,
    /// `links[node][layer]` is the neighbor list of `node` at `layer`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

impl GraphIndex {
    pub fn build(data: &[f32], dim: usize, params: GraphParams, seed: u64) -> GraphIndex {
        let n = data.len().checked_div(dim).unwrap_or(0);
        let m = params.m.max(2);
        let level_mult = 1.0 / (m as f64).ln();
        let mut g = GraphIndex { params, seed, entry: 0, links: Vec::with_capacity(n) };
        let vec_at = |p: u32| &data[p as usize * dim..(p as usize + 1) * dim];

        let mut max_level = 0usize;
        for node in 0..n as u32 {
            let u = unit_f64(mix64(seed ^ mix64(u64::from(node)))).max(f64::MIN_POSITIVE);
            let level = ((-u.ln()) * level_mult).floor() as usize;
            g.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                max_level = level;
                continue;
            }
            let q = vec_at(node);
            let mut ep = g.entry;
            for layer in (level + 1..=max_level).rev() {
                ep = g.greedy(q, ep, layer, &vec_at);
            }
            let mut eps = vec![ep];
            for layer in (0..=level.min(max_level)).rev() {
                let found = g.search_layer(q, &eps, params.ef_construction.max(m), layer, &vec_at);
                let cap = if layer == 0 { 2 * m } else { m };
                let chosen: Vec<u32> = found.iter().take(m).map(|s| s.pos).collect();
                g.links[node as usize][layer] = chosen.clone();
                for nb in chosen {
                    let list = &mut g.links[nb as usize][layer];
                    list.push(node);
                    if list.len() > cap {
                        let base = vec_at(nb);
                        let mut scored: Vec<Scored> =
                            list.iter().map(|&p| Scored { sim: dot(base, vec_at(p)), pos: p }).collect();
                        scored.sort_by(|a, b| b.cmp(a));
                        scored.truncate(cap);
                        *list = scored.into_iter().map(|s| s.pos).collect();
                    }
                }
                eps = found.into_iter().map(|s| s.pos).collect();
            }
            if level > max_level {
                max_level = level;
                g.entry = node;
            }
        }
        g.repair_reachability(&vec_at);
        g
    }

    pub fn max_level(&self) -> usize {
        self.links.get(self.entry as usize).map_or(0, |l| l.len() - 1)
    }

    fn greedy<'a>(&self, q: &[f32], mut ep: u32, layer: usize, vec_at: &impl Fn(u32) -> &'a [f32]) -> u32 {
        let mut best = dot(q, vec_at(ep));
        loop {
            let mut improved = false;
            for &nb in &self.links[ep as usize][layer] {
                let s = dot(q, vec_at(nb));
                if s > best || (s == best && nb < ep) {
                    best = s;
                    ep = nb;
                    improved = true;
                }
            }
            if !improved {
                return ep;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes, most similar first.
    fn search_layer<'a>(
        &self,
        q: &[f32],
        entries: &[u32],
        ef: usize,
        layer: usize,
        vec_at: &impl Fn(u32) -> &'a [f32],
    ) -> Vec<Scored> {
        let mut visited = vec![false; self.links.len()];
        let mut candidates = BinaryHeap::new();
        let mut results: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        for &e in entries {
            if std::mem::replace(&mut visited[e as usize], true) {
                continue;
            }
            let s = Scored { sim: dot(q, vec_at(e)), pos: e };
            candidates.push(s);
            results.push(std::cmp::Reverse(s));
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(w) = worst {
                if results.len() >= ef && c < w {
                    break;
                }
            }
            for &nb in &self.links[c.pos as usize][layer] {
                if std::mem::replace(&mut visited[nb as usize], true) {
                    continue;
                }
                let s = Scored { sim: dot(q, vec_at(nb)), pos: nb };
                if results.len() < ef || s > results.peek().unwrap().0 {
                    candidates.push(s);
                    results.push(std::cmp::Reverse(s));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Pruned back-links can orphan a node. Link every node the layer-0 walk
    /// from the entry point cannot reach to its most similar reachable node.
    fn repair_reachability<'a>(&mut self, vec_at: &impl Fn(u32) -> &'a [f32]) {
        let n = self.links.len();
        if n == 0 {
            return;
        }
        let mut reached = vec![false; n];
        let mut order = Vec::with_capacity(n);
        self.bfs_from(self.entry, &mut reached, &mut order);
        for node in 0..n as u32 {
            if reached[node as usize] {
                continue;
            }
            let q = vec_at(node);
            let parent = order
                .iter()
                .map(|&p| Scored { sim: dot(q, vec_at(p)), pos: p })
                .max()
                .expect("entry point is reachable")
                .pos;
            self.links[parent as usize][0].push(node);
            self.bfs_from(node, &mut reached, &mut order);
        }
    }

    fn bfs_from(&self, start: u32, reached: &mut [bool], order: &mut Vec<u32>) {
        let mut queue = VecDeque::from([start]);
        reached[start as usize] = true;
        order.push(start);
        while let Some(p) = queue.pop_front() {
            for &nb in &self.links[p as usize][0] {
                if !reached[nb as usize] {
                    reached[nb as usize] = true;
                    order.push(nb);
                    queue.push_back(nb);
                }
            }
        }
    }

    /// Whether every node is reachable from the entry point on layer 0.
    pub fn all_reachable(&self) -> bool {
        let mut reached = vec![false; self.links.len()];
        if self.links.is_empty() {
            return true;
        }
        let mut order = Vec::new();
        self.bfs_from(self.entry, &mut reached, &mut order);
        reached.iter().all(|r| *r)
    }

    /// Approximate top-k as `(position, similarity)`.
    pub(crate) fn search(&self, data: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<(usize, f32)> {
        if self.links.is_empty() || k == 0 {
            return Vec::new();
        }
        let vec_at = |p: u32| &data[p as usize * dim..(p as usize + 1) * dim];
        let mut ep = self.entry;
        for layer in (1..=self.max_level()).rev() {
            ep = self.greedy(q, ep, layer, &vec_at);
        }
        let ef = self.params.ef_search.max(k);
        self.search_layer(q, &[ep], ef, 0, &vec_at)
            .into_iter()
            .take(k)
            .map(|s| (s.pos as usize, s.sim))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Embedding, IndexStrategy, VectorIndex};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_index(n: usize, dim: usize, seed: u64) -> VectorIndex {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n as u64)
            .map(|i| {
                let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                (i, Embedding::new(v).unwrap())
            })
            .collect();
        VectorIndex::build(entries, IndexStrategy::Graph(GraphParams::default()), seed).unwrap()
    }

    #[test]
    fn graph_is_reachable_and_bounded() {
        let index = random_index(500, 16, 3);
        let g = index.graph().unwrap();
        assert!(g.all_reachable());
        assert_eq!(g.links.len(), 500);
    }

    #[test]
    fn recall_on_small_random_set() {
        let index = random_index(400, 16, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut hit = 0;
        for _ in 0..40 {
            let q: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let exact = index.exact_top_k(&q, 3).unwrap();
            let approx = index.top_k(&q, 3).unwrap();
            hit += exact.iter().filter(|e| approx.iter().any(|a| a.row_id == e.row_id)).count();
        }
        assert!(hit as f64 / 120.0 >= 0.9, "recall {}", hit as f64 / 120.0);
    }

    #[test]
    fn single_node_graph() {
        let index = VectorIndex::build(
            vec![(5, Embedding::new(vec![1.0, 0.0]).unwrap())],
            IndexStrategy::Graph(GraphParams::default()),
            1,
        )
        .unwrap();
        let hits = index.top_k(&[0.0, 1.0], 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].row_id, 5);
    }
}
