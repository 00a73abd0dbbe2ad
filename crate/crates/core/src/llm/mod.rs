//! Prompt rendering, output contracts on the wire, client-side validation
//! and the backend abstraction.

mod constraint;
mod http;
mod mock;
mod validate;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::{LlmInvocation, OutputContract};
use crate::value::Value;
use crate::vector::Embedding;

pub use constraint::{constraint_payload, int_range_regex, ConstraintPayload};
pub use http::HttpBackend;
pub use mock::{faithful_answer, LatencyModel, MockBackend, MockConfig, MockMode};
pub use validate::{validate_output, RecordField, TypedValue, ValidationError, ValidationReason};

/// Fixed system prompt sent with every request.
pub const SYSTEM_PROMPT: &str =
    "You are a function called from a SQL query. Answer using only the requested output format.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend refused the request with status {status}: {body}")]
    BackendRefused { status: u16, body: String },
    #[error("dialect {dialect:?} cannot express a {contract} contract")]
    UnsupportedDialect { dialect: ConstraintDialect, contract: String },
    #[error("prompt expects {expected} argument value(s), got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Transport-level failures that a resend may fix.
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::Timeout(_) | LlmError::BackendRefused { status: 429 | 500..=599, .. })
    }
}

/// Identifies the row a request belongs to: the plan operator and the
/// row's ordinal in that operator's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowTag {
    pub operator: usize,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRequest {
    pub request_id: u64,
    pub rendered_prompt: String,
    pub system_prompt: Arc<str>,
    pub contract: Arc<OutputContract>,
    pub row_tag: RowTag,
    pub max_output_tokens: u32,
    pub constrained: bool,
    /// 0 for the first send; incremented on every retry.
    pub attempt: u32,
    /// Clarification appended to the prompt on retries.
    pub retry_note: Option<String>,
}

impl InferenceRequest {
    pub fn new(
        request_id: u64,
        rendered_prompt: String,
        contract: Arc<OutputContract>,
        row_tag: RowTag,
        max_output_tokens: u32,
    ) -> InferenceRequest {
        InferenceRequest {
            request_id,
            rendered_prompt,
            system_prompt: Arc::from(SYSTEM_PROMPT),
            constrained: contract.is_constrained(),
            contract,
            row_tag,
            max_output_tokens,
            attempt: 0,
            retry_note: None,
        }
    }

    /// Prompt text as sent, including any retry clarification.
    pub fn user_message(&self) -> String {
        match &self.retry_note {
            Some(note) => format!("{}\n{}", self.rendered_prompt, note),
            None => self.rendered_prompt.clone(),
        }
    }

    pub fn prompt_tokens(&self) -> u64 {
        approx_tokens(&self.system_prompt) + approx_tokens(&self.user_message())
    }

    pub fn next_attempt(&self) -> InferenceRequest {
        let mut r = self.clone();
        r.attempt += 1;
        r.retry_note = Some(contract_instruction(&self.contract));
        r
    }
}

/// Line restating the contract, appended when a response is rejected.
pub fn contract_instruction(contract: &OutputContract) -> String {
    match contract {
        OutputContract::FreeText => "Answer in plain text.".into(),
        OutputContract::Choice { options } => {
            format!("Respond with exactly one of: {}. Output nothing else.", options.join(" | "))
        }
        OutputContract::IntRange { lo, hi } => {
            format!("Respond with a single integer between {lo} and {hi}. Output nothing else.")
        }
        OutputContract::SchemaText { fields } => {
            let list: Vec<String> = fields.iter().map(|f| format!("{} ({:?})", f.name, f.ty).to_lowercase()).collect();
            format!("Respond with a single JSON object with the fields {}. Output nothing else.", list.join(", "))
        }
    }
}

/// Token estimate used wherever a backend reports no usage: one token per
/// four characters, rounded up.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    /// Time the backend spent on the request: simulated for the mock,
    /// measured for HTTP.
    pub service_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintDialect {
    /// `response_format: {type: json_schema, ...}`.
    JsonSchemaResponseFormat,
    /// `guided_regex` / `guided_json` extension fields.
    GuidedChoiceRegex,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    OpenaiCompatibleHttp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Base URL; requests go to `<endpoint>/chat/completions`.
    pub endpoint: Option<String>,
    pub model: String,
    pub embedding_model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub dialect: ConstraintDialect,
    pub timeout_ms: u64,
    /// Resends after transport errors, per request.
    pub max_retries: u32,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "mock".into(),
            embedding_model: None,
            api_key_env: None,
            dialect: ConstraintDialect::JsonSchemaResponseFormat,
            timeout_ms: 60_000,
            max_retries: 3,
        }
    }
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind == BackendKind::OpenaiCompatibleHttp {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config("HTTP backend requires an endpoint".into()));
            }
            if self.model.is_empty() {
                return Err(LlmError::Config("HTTP backend requires a model name".into()));
            }
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// One request, one response. Batching is the scheduler's concern.
    fn invoke(&self, request: &InferenceRequest) -> Result<Completion, LlmError>;

    /// Several rows in one prompt; the response carries one delimited
    /// answer per member. See [`pack_prompt`].
    fn invoke_packed(&self, members: &[InferenceRequest]) -> Result<Completion, LlmError> {
        let first = &members[0];
        let mut req = InferenceRequest::new(
            first.request_id,
            pack_prompt(members),
            Arc::new(OutputContract::FreeText),
            first.row_tag,
            members.iter().map(|m| m.max_output_tokens + 8).sum(),
        );
        req.attempt = first.attempt;
        self.invoke(&req)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, LlmError>;

    /// Whether service times are simulated, in which case the scheduler
    /// runs on a virtual clock instead of threads.
    fn is_simulated(&self) -> bool {
        false
    }

    /// Requests the server works on at once, when known.
    fn concurrency(&self) -> Option<usize> {
        None
    }
}

/// Builds one prompt carrying several rows. Each answer must be written on
/// its own line as `[[<n>]] <answer>`, numbered from 1.
pub fn pack_prompt(members: &[InferenceRequest]) -> String {
    let mut out = String::from(
        "Answer each numbered task independently. Write exactly one line per task, formatted as \
         [[n]] followed by the answer for task n.\n",
    );
    for (i, m) in members.iter().enumerate() {
        out.push_str(&format!("\n### Task {}\n{}\n", i + 1, m.user_message()));
        let note = contract_instruction(&m.contract);
        out.push_str(&note);
        out.push('\n');
    }
    out
}

/// Formats per-member answers in the packed response layout.
pub fn format_packed_answers(answers: &[String]) -> String {
    answers.iter().enumerate().map(|(i, a)| format!("[[{}]] {}", i + 1, a)).collect::<Vec<_>>().join("\n")
}

/// Splits a packed response into `n` answers; missing or malformed entries
/// are `None`.
pub fn parse_packed_answers(text: &str, n: usize) -> Vec<Option<String>> {
    let mut out = vec![None; n];
    for line in text.lines() {
        let line = line.trim_start();
        let Some(rest) = line.strip_prefix("[[") else { continue };
        let Some(close) = rest.find("]]") else { continue };
        let Ok(idx) = rest[..close].trim().parse::<usize>() else { continue };
        if (1..=n).contains(&idx) && out[idx - 1].is_none() {
            out[idx - 1] = Some(rest[close + 2..].trim().to_string());
        }
    }
    out
}

/// Fills the invocation's template with one row of argument values.
///
/// Nulls render as `<NULL>`. Values beyond the placeholder count are
/// appended on their own lines.
pub fn render_prompt(invocation: &LlmInvocation, row: &[Value]) -> Result<String, LlmError> {
    if row.len() != invocation.args.len() {
        return Err(LlmError::ArityMismatch { expected: invocation.args.len(), got: row.len() });
    }
    let values: Vec<String> = row.iter().map(Value::render).collect();
    Ok(invocation.template.render(&values))
}
