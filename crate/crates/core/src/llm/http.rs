//! OpenAI-compatible chat-completions client.
//!
//! Constraint fields per dialect:
//! * `json_schema_response_format`: `response_format` with a strict JSON
//!   schema wrapping the value as `{"value": ...}`; the wrapper is removed
//!   before validation.
//! * `guided_choice_regex`: `guided_regex` for choices and integer ranges,
//!   `guided_json` for records (vLLM extension fields).
//! * `none`: no constraint fields; the scheduler validates and retries.

use std::time::{Duration, Instant};

use serde_json::{json, Value as Json};

use super::constraint::WRAP_KEY;
use super::{
    approx_tokens, constraint_payload, Backend, BackendDescriptor, ConstraintDialect, Completion, InferenceRequest,
    LlmError, Usage,
};
use crate::vector::Embedding;

pub struct HttpBackend {
    descriptor: BackendDescriptor,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    embedding_dim: Option<usize>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("descriptor", &self.descriptor).finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// `embedding_dim`, when given, is checked against every embedding the
    /// server returns.
    pub fn new(descriptor: BackendDescriptor, embedding_dim: Option<usize>) -> Result<HttpBackend, LlmError> {
        descriptor.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(descriptor.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let api_key = descriptor.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        Ok(HttpBackend { descriptor, client, api_key, embedding_dim })
    }

    fn url(&self, path: &str) -> String {
        let base = self.descriptor.endpoint.as_deref().unwrap_or_default().trim_end_matches('/');
        format!("{base}/{path}")
    }

    fn post_once(&self, path: &str, body: &Json) -> Result<Json, LlmError> {
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| self.transport_error(e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| self.transport_error(e))?;
        if !status.is_success() {
            return Err(LlmError::BackendRefused { status: status.as_u16(), body: text });
        }
        serde_json::from_str(&text).map_err(|e| LlmError::InvalidResponse(format!("{e}: {text}")))
    }

    fn transport_error(&self, e: reqwest::Error) -> LlmError {
        if e.is_timeout() {
            LlmError::Timeout(Duration::from_millis(self.descriptor.timeout_ms))
        } else {
            LlmError::Transport(e.to_string())
        }
    }

    /// Posts with resends on transient failures.
    fn post(&self, path: &str, body: &Json) -> Result<Json, LlmError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_transient() && attempt < self.descriptor.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 * (1 << attempt.min(6))));
                }
                other => return other,
            }
        }
    }

    /// Request body for one inference request.
    pub fn chat_body(&self, request: &InferenceRequest) -> Json {
        let mut body = json!({
            "model": self.descriptor.model,
            "messages": [
                { "role": "system", "content": &*request.system_prompt },
                { "role": "user", "content": request.user_message() },
            ],
            "max_tokens": request.max_output_tokens,
            "temperature": 0,
        });
        // Without a usable dialect the request goes out unconstrained and
        // the scheduler's validation does the enforcing.
        if let Ok(fields) = constraint_payload(&request.contract, self.descriptor.dialect) {
            let obj = body.as_object_mut().expect("object body");
            obj.extend(fields);
        }
        body
    }

    fn unwrap_value(&self, request: &InferenceRequest, content: String) -> String {
        if self.descriptor.dialect != ConstraintDialect::JsonSchemaResponseFormat || !request.constrained {
            return content;
        }
        match serde_json::from_str::<Json>(&content) {
            Ok(Json::Object(mut obj)) if obj.len() == 1 && obj.contains_key(WRAP_KEY) => {
                match obj.remove(WRAP_KEY).unwrap() {
                    Json::String(s) => s,
                    other => other.to_string(),
                }
            }
            _ => content,
        }
    }
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn invoke(&self, request: &InferenceRequest) -> Result<Completion, LlmError> {
        let started = Instant::now();
        let resp = self.post("chat/completions", &self.chat_body(request))?;
        let content = resp["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::InvalidResponse(format!("no message content in {resp}")))?
            .to_string();
        let text = self.unwrap_value(request, content);
        let usage = Usage {
            prompt_tokens: resp["usage"]["prompt_tokens"].as_u64().unwrap_or_else(|| request.prompt_tokens()),
            output_tokens: resp["usage"]["completion_tokens"].as_u64().unwrap_or_else(|| approx_tokens(&text)),
        };
        Ok(Completion { text, usage, service_time: started.elapsed() })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, LlmError> {
        let model = self.descriptor.embedding_model.as_deref().unwrap_or(&self.descriptor.model);
        let resp = self.post("embeddings", &json!({ "model": model, "input": texts }))?;
        let data = resp["data"].as_array().ok_or_else(|| LlmError::InvalidResponse("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(LlmError::InvalidResponse(format!("{} embeddings for {} inputs", data.len(), texts.len())));
        }
        let mut items: Vec<(u64, Vec<f32>)> = Vec::with_capacity(data.len());
        for (i, d) in data.iter().enumerate() {
            let idx = d["index"].as_u64().unwrap_or(i as u64);
            let v: Vec<f32> = d["embedding"]
                .as_array()
                .ok_or_else(|| LlmError::InvalidResponse("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<_>>()
                .ok_or_else(|| LlmError::InvalidResponse("non-numeric embedding".into()))?;
            if let Some(dim) = self.embedding_dim {
                if v.len() != dim {
                    return Err(LlmError::DimensionMismatch { expected: dim, got: v.len() });
                }
            }
            items.push((idx, v));
        }
        items.sort_by_key(|(i, _)| *i);
        items
            .into_iter()
            .map(|(_, v)| Embedding::new(v).map(Embedding::normalized).map_err(|e| LlmError::InvalidResponse(e.to_string())))
            .collect()
    }
}
