mod common;

use common::brute_force_top_k;
use llmq_core::vector::{mock_embedding, Embedding, GraphParams, IndexStrategy, VectorIndex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nonzero(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn index(data: &[Vec<f32>], strategy: IndexStrategy) -> VectorIndex {
    let entries = data.iter().enumerate().map(|(i, v)| (i as u64, Embedding::new(v.clone()).unwrap())).collect();
    VectorIndex::build(entries, strategy, 7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn exact_scan_matches_brute_force(
        (data, query) in (1usize..9).prop_flat_map(|d| (prop::collection::vec(nonzero(d), 1..120), nonzero(d))),
        k in 0usize..20,
    ) {
        let idx = index(&data, IndexStrategy::ExactScan);
        let got = idx.top_k(&query, k).unwrap();
        let want = brute_force_top_k(&data, &query, k);
        prop_assert_eq!(got.len(), want.len());
        let all = brute_force_top_k(&data, &query, data.len());
        let oracle = |id: u64| all.iter().find(|(i, _)| *i == id).unwrap().1;
        for (rank, (g, w)) in got.iter().zip(&want).enumerate() {
            // Equal up to f32 rounding; ids can only differ across a near tie.
            prop_assert!((oracle(g.row_id) - w.1).abs() < 1e-5, "rank {}: {:?} vs {:?}", rank, g, w);
            prop_assert!((g.similarity as f64 - w.1).abs() < 1e-5);
        }
        for pair in got.windows(2) {
            prop_assert!(pair[0].similarity >= pair[1].similarity);
        }
    }

    #[test]
    fn duplicates_rank_by_row_id(base in nonzero(6), copies in 2usize..8, noise in prop::collection::vec(nonzero(6), 0..20), k in 1usize..10) {
        let mut data = noise;
        let first = data.len();
        data.extend(std::iter::repeat_n(base.clone(), copies));
        for strategy in [IndexStrategy::ExactScan, IndexStrategy::Graph(GraphParams::default())] {
            let idx = index(&data, strategy);
            let got = idx.exact_top_k(&base, k.min(copies)).unwrap();
            let ids: Vec<u64> = got.iter().map(|n| n.row_id).collect();
            let expected: Vec<u64> = (first as u64..).take(k.min(copies)).collect();
            prop_assert_eq!(ids, expected);
        }
    }

    #[test]
    fn mock_embeddings_are_unit_and_self_nearest(texts in prop::collection::btree_set("[a-z ]{4,30}", 1..30)) {
        let texts: Vec<String> = texts.into_iter().collect();
        let data: Vec<Vec<f32>> = texts.iter().map(|t| mock_embedding(t, 32, 3)).collect();
        for v in &data {
            let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-4);
        }
        let idx = index(&data, IndexStrategy::ExactScan);
        for (i, v) in data.iter().enumerate() {
            let top = idx.top_k(v, 1).unwrap()[0];
            prop_assert!((top.similarity - 1.0).abs() < 1e-4);
            if top.row_id != i as u64 {
                prop_assert_eq!(&data[top.row_id as usize], v);
            }
        }
    }
}

#[test]
fn graph_recall_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dim = 24;
    let data: Vec<Vec<f32>> = (0..3000).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let idx = index(&data, IndexStrategy::Graph(GraphParams::default()));
    assert!(idx.graph().unwrap().all_reachable());
    let (mut hits, k, queries) = (0usize, 10, 100);
    for _ in 0..queries {
        let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let truth: Vec<u64> = brute_force_top_k(&data, &q, k).into_iter().map(|(i, _)| i).collect();
        let got = idx.top_k(&q, k).unwrap();
        hits += got.iter().filter(|n| truth.contains(&n.row_id)).count();
    }
    let recall = hits as f64 / (k * queries) as f64;
    assert!(recall >= 0.95, "recall {recall}");
}

#[test]
fn dimension_mismatch_is_rejected() {
    let idx = index(&[vec![1.0, 0.0], vec![0.0, 1.0]], IndexStrategy::ExactScan);
    assert!(idx.top_k(&[1.0, 0.0, 0.0], 1).is_err());
    let bad = VectorIndex::build(
        vec![(0, Embedding::new(vec![1.0, 0.0]).unwrap()), (1, Embedding::new(vec![1.0]).unwrap())],
        IndexStrategy::ExactScan,
        0,
    );
    assert!(bad.is_err());
}
