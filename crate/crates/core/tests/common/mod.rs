//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use llmq_core::llm::{Backend, BackendDescriptor, Completion, InferenceRequest, LlmError};
use llmq_core::vector::Embedding;
use llmq_core::{Catalog, Engine, EngineConfig, MockBackend, Row, Value};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Engine over a fresh catalog backed by a shared mock whose counters the
/// caller can read.
pub fn mock_engine(config: EngineConfig) -> (Engine, Arc<MockBackend>) {
    let mock = Arc::new(MockBackend::new(config.effective_mock()));
    let engine = Engine::with_backend(config, Catalog::new(), mock.clone());
    (engine, mock)
}

/// Wraps a backend and records every prompt it receives.
pub struct Recording<B> {
    pub inner: B,
    pub prompts: Mutex<Vec<String>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Recording<B> {
        Recording { inner, prompts: Mutex::new(Vec::new()) }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn invoke(&self, request: &InferenceRequest) -> Result<Completion, LlmError> {
        self.prompts.lock().unwrap().push(request.rendered_prompt.clone());
        self.inner.invoke(request)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, LlmError> {
        self.inner.embed(texts)
    }

    fn is_simulated(&self) -> bool {
        self.inner.is_simulated()
    }

    fn concurrency(&self) -> Option<usize> {
        self.inner.concurrency()
    }
}

/// Rows sorted into a canonical order, for multiset comparison.
pub fn multiset(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows
}

const TEMPLATES: &[&str] = &[
    "Summarize {text}",
    "Is {text} suitable for kids?",
    "Describe {a} in light of {b}",
    "Classify {x}",
];

const FILTER_TEMPLATES: &[&str] = &["Is {text} positive?", "Does {text} mention a family?"];

fn llm_call(rng: &mut impl Rng, cols: &[&str]) -> String {
    let t = *TEMPLATES.choose(rng).unwrap();
    let n = if t.contains("{b}") { 2 } else { 1 };
    let args: Vec<&str> = (0..n).map(|_| *cols.choose(rng).unwrap()).collect();
    format!("LLM(\"{t}\", {})", args.join(", "))
}

/// A random query over the `movies`, `reviews` and `squad` fixture tables,
/// drawn from the supported grammar: projections, joins, cheap and LLM
/// conjuncts, grouped averages and similarity search.
pub fn random_query(rng: &mut impl Rng) -> String {
    match rng.random_range(0..4) {
        0 | 1 => join_query(rng),
        2 => squad_query(rng),
        _ => grouped_query(rng),
    }
}

fn join_query(rng: &mut impl Rng) -> String {
    let text_cols = ["m.movie_info", "r.review_content", "m.movie_title", "r.review_type"];
    let mut items = Vec::new();
    for i in 0..rng.random_range(1..=3) {
        items.push(match rng.random_range(0..3) {
            0 => format!("{} AS c{i}", text_cols.choose(rng).unwrap()),
            1 => format!("{} AS c{i}", llm_call(rng, &text_cols)),
            _ => format!("'lit{i}' AS c{i}"),
        });
    }
    let from = if rng.random_bool(0.5) {
        "FROM movies m JOIN reviews r ON r.rotten_tomatoes_link = m.rotten_tomatoes_link"
    } else {
        "FROM reviews r JOIN movies m ON m.rotten_tomatoes_link == r.rotten_tomatoes_link"
    };
    let mut conj = Vec::new();
    for _ in 0..rng.random_range(0..=3) {
        conj.push(match rng.random_range(0..6) {
            0 => format!("r.review_type = '{}'", ["Fresh", "Rotten"].choose(rng).unwrap()),
            1 => "r.review_type <> 'Rotten'".to_string(),
            2 => ["TRUE", "FALSE", "1 = 1"].choose(rng).unwrap().to_string(),
            3 => format!("m.movie_title >= 'The {}'", ["a", "f", "q"].choose(rng).unwrap()),
            4 => format!(
                "LLM(\"{}\", {}) {} 'Yes'",
                FILTER_TEMPLATES.choose(rng).unwrap(),
                text_cols.choose(rng).unwrap(),
                ["=", "==", "<>"].choose(rng).unwrap()
            ),
            _ => "m.rotten_tomatoes_link = r.rotten_tomatoes_link".to_string(),
        });
    }
    with_where(format!("SELECT {} {from}", items.join(", ")), conj)
}

fn squad_query(rng: &mut impl Rng) -> String {
    let cols = ["s.question", "s.title", "s.context"];
    let mut items = vec![match rng.random_range(0..3) {
        0 => format!(
            "LLM(\"Given the following {{context}}, answer this question\", SIMILARITY_SEARCH(s.question, {}), s.question) AS answer",
            rng.random_range(1..=4)
        ),
        1 => format!("{} AS answer", llm_call(rng, &cols)),
        _ => "s.id AS answer".to_string(),
    }];
    if rng.random_bool(0.5) {
        items.push("s.title AS topic".to_string());
    }
    let mut conj = Vec::new();
    for _ in 0..rng.random_range(0..=3) {
        conj.push(match rng.random_range(0..5) {
            0 => "s.is_impossible == False".to_string(),
            1 => "s.is_impossible".to_string(),
            2 => format!("s.id < {}", rng.random_range(0..120)),
            3 => format!("s.title = 'Topic {}'", rng.random_range(0..17)),
            _ => format!("LLM(\"{}\", s.question) = 'Yes'", FILTER_TEMPLATES.choose(rng).unwrap()),
        });
    }
    with_where(format!("SELECT {} FROM squad s", items.join(", ")), conj)
}

fn grouped_query(rng: &mut impl Rng) -> String {
    if rng.random_bool(0.3) {
        let cols = ["s.question", "s.context"];
        let agg = if rng.random_bool(0.5) {
            format!("AVG({})", llm_call(rng, &cols).replacen("LLM(\"", "LLM(\"Rate ", 1))
        } else {
            "AVG(s.id)".to_string()
        };
        let conj = if rng.random_bool(0.5) { vec!["s.is_impossible = FALSE".to_string()] } else { vec![] };
        return with_where(format!("SELECT s.title, {agg} AS score FROM squad s"), conj) + " GROUP BY s.title";
    }
    let cols = ["r.review_content", "m.movie_info"];
    let key = *["r.review_type", "m.movie_title"].choose(rng).unwrap();
    let agg = format!(
        "AVG(LLM(\"Rate a satisfaction score between 0 (bad) and 5 (good) based on {{review}}\", {}))",
        cols.choose(rng).unwrap()
    );
    let conj = match rng.random_range(0..3) {
        0 => vec!["r.review_type = 'Fresh'".to_string()],
        1 => vec![format!("LLM(\"{}\", r.review_content) = 'Yes'", FILTER_TEMPLATES.choose(rng).unwrap())],
        _ => vec![],
    };
    with_where(
        format!(
            "SELECT {key}, {agg} AS score FROM reviews r JOIN movies m ON r.rotten_tomatoes_link = m.rotten_tomatoes_link"
        ),
        conj,
    ) + &format!(" GROUP BY {key}")
}

fn with_where(base: String, conj: Vec<String>) -> String {
    if conj.is_empty() {
        base
    } else {
        format!("{base} WHERE {}", conj.join(" AND "))
    }
}

/// Brute-force cosine ranking in f64: `(row_id, similarity)` best first,
/// ties by ascending id.
pub fn brute_force_top_k(data: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(u64, f64)> {
    let norm = |v: &[f32]| v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(u64, f64)> = data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum();
            (i as u64, dot / (norm(v) * qn))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn text(v: &Value) -> String {
    v.render()
}
