//! Deterministic stand-in for a model server.
//!
//! Faithful answers are a pure function of the rendered prompt's hash,
//! mapped into the contract's value space. Noisy mode appends an
//! explanation to some answers, the way chat models do when asked for a
//! bare label. Latency is sampled per (request id, attempt) from a seeded
//! distribution and reported as simulated service time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    approx_tokens, format_packed_answers, Backend, BackendDescriptor, Completion, InferenceRequest, LlmError, Usage,
};
use crate::sql::{OutputContract, SchemaFieldType};
use crate::value::{stable_hash64, stable_hash_parts, unit_f64};
use crate::vector::{mock_embedding, Embedding};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "p", rename_all = "snake_case")]
pub enum MockMode {
    Faithful,
    /// Probability that an answer carries extra text.
    Noisy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum LatencyModel {
    Fixed { ms: f64 },
    Uniform { lo_ms: f64, hi_ms: f64 },
    Exponential { mean_ms: f64 },
}

impl LatencyModel {
    pub fn sample(&self, u: f64) -> Duration {
        let ms = match *self {
            LatencyModel::Fixed { ms } => ms,
            LatencyModel::Uniform { lo_ms, hi_ms } => lo_ms + u * (hi_ms - lo_ms),
            LatencyModel::Exponential { mean_ms } => -mean_ms * (1.0 - u).ln(),
        };
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub mode: MockMode,
    pub latency: LatencyModel,
    /// Seeds noise and latency; faithful answers do not depend on it.
    pub seed: u64,
    /// Requests the simulated server processes at once.
    pub slots: usize,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    /// Sleep for the sampled latency instead of simulating it.
    pub real_time: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            mode: MockMode::Faithful,
            latency: LatencyModel::Fixed { ms: 100.0 },
            seed: 42,
            slots: 16,
            embedding_dim: 64,
            embedding_seed: 7,
            real_time: false,
        }
    }
}

const NOISE_SUFFIX: &str = ", because the material is broadly appropriate and the review is consistent with it.";

#[derive(Debug)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    config: MockConfig,
    calls: AtomicU64,
    embed_calls: AtomicU64,
    embedded_texts: AtomicU64,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> MockBackend {
        MockBackend {
            descriptor: BackendDescriptor::default(),
            config,
            calls: AtomicU64::new(0),
            embed_calls: AtomicU64::new(0),
            embedded_texts: AtomicU64::new(0),
        }
    }

    pub fn faithful() -> MockBackend {
        MockBackend::new(MockConfig::default())
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    /// Backend invocations so far, counting a packed request once.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn embedded_texts(&self) -> u64 {
        self.embedded_texts.load(Ordering::SeqCst)
    }

    pub fn reset_counters(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.embed_calls.store(0, Ordering::SeqCst);
        self.embedded_texts.store(0, Ordering::SeqCst);
    }

    fn is_noisy(&self, req: &InferenceRequest) -> bool {
        match self.config.mode {
            MockMode::Faithful => false,
            MockMode::Noisy(p) => {
                let h = stable_hash_parts(&[
                    &self.config.seed.to_le_bytes(),
                    req.rendered_prompt.as_bytes(),
                    &req.attempt.to_le_bytes(),
                ]);
                unit_f64(h) < p
            }
        }
    }

    fn answer(&self, req: &InferenceRequest) -> String {
        let mut out = faithful_answer(&req.contract, &req.rendered_prompt);
        if self.is_noisy(req) {
            out.push_str(NOISE_SUFFIX);
        }
        out
    }

    fn latency(&self, req: &InferenceRequest) -> Duration {
        let h = stable_hash_parts(&[
            &self.config.seed.to_le_bytes(),
            &req.request_id.to_le_bytes(),
            &req.attempt.to_le_bytes(),
            b"latency",
        ]);
        self.config.latency.sample(unit_f64(h))
    }

    fn finish(&self, text: String, prompt_tokens: u64, service_time: Duration) -> Completion {
        if self.config.real_time {
            std::thread::sleep(service_time);
        }
        let usage = Usage { prompt_tokens, output_tokens: approx_tokens(&text) };
        Completion { text, usage, service_time }
    }
}

/// The answer a faithful model gives: a function of the prompt hash only.
pub fn faithful_answer(contract: &OutputContract, prompt: &str) -> String {
    let h = stable_hash64(prompt.as_bytes());
    match contract {
        OutputContract::Choice { options } => options[(h % options.len() as u64) as usize].clone(),
        OutputContract::IntRange { lo, hi } => {
            let span = (*hi as i128 - *lo as i128 + 1) as u128;
            (*lo as i128 + (h as u128 % span) as i128).to_string()
        }
        OutputContract::FreeText => format!("Generated answer {h:016x} for the given input."),
        OutputContract::SchemaText { fields } => {
            let mut map = serde_json::Map::new();
            for (i, f) in fields.iter().enumerate() {
                let fh = stable_hash_parts(&[&h.to_le_bytes(), &(i as u64).to_le_bytes()]);
                let v = match f.ty {
                    SchemaFieldType::Text => serde_json::Value::String(format!("v{:08x}", fh as u32)),
                    SchemaFieldType::Int => serde_json::Value::from(fh % 100),
                    SchemaFieldType::Float => serde_json::Value::from((fh % 1000) as f64 / 10.0),
                    SchemaFieldType::Bool => serde_json::Value::Bool(fh % 2 == 0),
                };
                map.insert(f.name.clone(), v);
            }
            serde_json::Value::Object(map).to_string()
        }
    }
}

impl Backend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn invoke(&self, request: &InferenceRequest) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.answer(request);
        Ok(self.finish(text, request.prompt_tokens(), self.latency(request)))
    }

    /// Answers every member; service time grows by a quarter of the base
    /// latency per extra member.
    fn invoke_packed(&self, members: &[InferenceRequest]) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let answers: Vec<String> = members.iter().map(|m| self.answer(m)).collect();
        let base = self.latency(&members[0]);
        let service = base.mul_f64(1.0 + 0.25 * (members.len() as f64 - 1.0));
        let prompt_tokens = approx_tokens(&super::pack_prompt(members)) + approx_tokens(&members[0].system_prompt);
        Ok(self.finish(format_packed_answers(&answers), prompt_tokens, service))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, LlmError> {
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        self.embedded_texts.fetch_add(texts.len() as u64, Ordering::SeqCst);
        texts
            .iter()
            .map(|t| {
                Embedding::new(mock_embedding(t, self.config.embedding_dim, self.config.embedding_seed))
                    .map_err(|e| LlmError::InvalidResponse(e.to_string()))
            })
            .collect()
    }

    fn is_simulated(&self) -> bool {
        !self.config.real_time
    }

    fn concurrency(&self) -> Option<usize> {
        Some(self.config.slots.max(1))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{validate_output, RowTag};

    fn request(contract: OutputContract, prompt: &str) -> InferenceRequest {
        InferenceRequest::new(1, prompt.into(), Arc::new(contract), RowTag { operator: 0, ordinal: 0 }, 16)
    }

    #[test]
    fn deterministic_and_closed() {
        let m = MockBackend::faithful();
        let c = OutputContract::Choice { options: vec!["Yes".into(), "No".into()] };
        let r = request(c.clone(), "is this fine?");
        let a = m.invoke(&r).unwrap();
        let b = m.invoke(&r).unwrap();
        assert_eq!(a, b);
        assert!(validate_output(&c, &a.text).is_ok());
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn noisy_one_always_fails_validation() {
        let m = MockBackend::new(MockConfig { mode: MockMode::Noisy(1.0), ..Default::default() });
        let c = OutputContract::Choice { options: vec!["Yes".into(), "No".into()] };
        let out = m.invoke(&request(c.clone(), "p")).unwrap().text;
        assert!(out.starts_with("Yes") || out.starts_with("No"));
        assert!(validate_output(&c, &out).is_err());
    }

    #[test]
    fn retry_keeps_faithful_answer() {
        let m = MockBackend::new(MockConfig { mode: MockMode::Noisy(0.5), ..Default::default() });
        let c = OutputContract::IntRange { lo: 0, hi: 5 };
        let r = request(c.clone(), "rate it");
        let expected = faithful_answer(&c, "rate it");
        let mut next = r.clone();
        for _ in 0..20 {
            let t = m.invoke(&next).unwrap().text;
            assert!(t.starts_with(&expected));
            next = next.next_attempt();
        }
    }

    #[test]
    fn latency_models() {
        assert_eq!(LatencyModel::Fixed { ms: 100.0 }.sample(0.3), Duration::from_millis(100));
        let u = LatencyModel::Uniform { lo_ms: 10.0, hi_ms: 20.0 }.sample(0.5);
        assert_eq!(u, Duration::from_millis(15));
        assert!(LatencyModel::Exponential { mean_ms: 50.0 }.sample(0.0) == Duration::ZERO);
    }

    #[test]
    fn packed_answers_match_singles() {
        let m = MockBackend::faithful();
        let c = Arc::new(OutputContract::IntRange { lo: 1, hi: 9 });
        let members: Vec<InferenceRequest> = (0..3)
            .map(|i| InferenceRequest::new(i, format!("row {i}"), c.clone(), RowTag { operator: 0, ordinal: i as usize }, 4))
            .collect();
        let packed = m.invoke_packed(&members).unwrap();
        let parsed = crate::llm::parse_packed_answers(&packed.text, 3);
        for (i, p) in parsed.iter().enumerate() {
            assert_eq!(p.as_deref(), Some(faithful_answer(&c, &format!("row {i}")).as_str()));
        }
    }

    #[test]
    fn embeddings_are_counted() {
        let m = MockBackend::faithful();
        let e = m.embed(&["a b c".into(), "d e f".into()]).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((m.embed_calls(), m.embedded_texts()), (1, 2));
    }
}
