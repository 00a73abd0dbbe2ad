//! Workloads shared by the benchmarks.

use std::sync::Arc;

use llmq_core::llm::{InferenceRequest, RowTag};
use llmq_core::sql::OutputContract;
use llmq_core::vector::{mock_embedding, Embedding, IndexStrategy, VectorIndex};
use llmq_core::{Catalog, Engine, EngineConfig};

/// Engine on the mock backend with the suite fixtures loaded.
pub fn fixture_engine(rows: usize, window: usize) -> Engine {
    let mut config = EngineConfig::default();
    config.scheduler.window = window;
    let engine = Engine::new(config, Catalog::new()).expect("default config is valid");
    engine.load_fixtures(rows).expect("fixtures load");
    engine
}

/// `n` single-row requests alternating between a constrained and a free-text
/// contract.
pub fn requests(n: usize) -> Vec<InferenceRequest> {
    let yes_no = Arc::new(OutputContract::choice(["Yes", "No"]).expect("valid choice"));
    let free = Arc::new(OutputContract::FreeText);
    (0..n)
        .map(|i| {
            let contract = if i % 2 == 0 { yes_no.clone() } else { free.clone() };
            InferenceRequest::new(i as u64, format!("Is review {i} positive?"), contract, RowTag { operator: 1, ordinal: i }, 32)
        })
        .collect()
}

/// Index over `n` mock embeddings of synthetic sentences.
pub fn text_index(n: usize, dim: usize, strategy: IndexStrategy) -> VectorIndex {
    let entries = (0..n)
        .map(|i| {
            let v = mock_embedding(&format!("passage {i} about topic {}", i % 97), dim, 1);
            (i as u64, Embedding::new(v).expect("nonempty"))
        })
        .collect();
    VectorIndex::build(entries, strategy, 1).expect("nonempty index")
}
