//! Windowed dispatch of inference requests with validation and retries.
//!
//! Requests are grouped into envelopes (one row each, or several rows
//! packed under a token budget), at most `window` envelopes are
//! outstanding, and outputs are delivered in submission order. Responses
//! that fail their contract are retried with a restated instruction ahead
//! of new work, up to `max_retries` times.

mod batch;
mod dispatch;
mod metrics;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{assemble_batch, request_tokens, BatchClass, BatchEnvelope};
pub use metrics::{MetricsReport, METRICS_SCHEMA_VERSION};

use dispatch::{Dispatcher, Finished, SimDispatcher, ThreadDispatcher};

use crate::llm::{
    approx_tokens, parse_packed_answers, validate_output, Backend, BackendKind, ConstraintDialect, InferenceRequest,
    LlmError, RowTag, TypedValue, ValidationError, ValidationReason, SYSTEM_PROMPT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowsPerRequest {
    One,
    /// Pack as many rows as fit the token budget (experimental).
    Budgeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionPolicy {
    /// Emit NULL for the row and carry on.
    NullValue,
    /// Abort the query.
    FailQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Maximum envelopes outstanding at once.
    pub window: usize,
    /// Model context length in tokens.
    pub context_window: u64,
    pub rows_per_request: RowsPerRequest,
    pub max_retries: u32,
    pub on_exhausted: ExhaustionPolicy,
    /// Check outputs against their contracts. When off, raw text passes
    /// through untyped.
    pub validate: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            window: 8,
            context_window: 128_000,
            rows_per_request: RowsPerRequest::One,
            max_retries: 3,
            on_exhausted: ExhaustionPolicy::NullValue,
            validate: true,
        }
    }
}

impl SchedulerConfig {
    pub fn system_prompt_tokens(&self) -> u64 {
        approx_tokens(SYSTEM_PROMPT)
    }

    /// Tokens available per envelope for prompts plus reserved output.
    pub fn token_budget(&self) -> u64 {
        self.context_window.saturating_sub(self.system_prompt_tokens())
    }

    pub fn max_attempts(&self) -> u32 {
        1 + self.max_retries
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RowError {
    #[error("no valid output after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: ValidationError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowOutcome {
    pub row_tag: RowTag,
    pub request_id: u64,
    pub attempts: u32,
    pub result: Result<TypedValue, RowError>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("invalid scheduler configuration: {0}")]
    Config(String),
    #[error("row tag {0:?} submitted twice")]
    DuplicateRowTag(RowTag),
    #[error("request id {0} submitted twice")]
    DuplicateRequestId(u64),
    #[error("query aborted: row {row_tag:?} had no valid output after {attempts} attempts ({last})")]
    QueryAborted { row_tag: RowTag, attempts: u32, last: ValidationError },
    #[error("backend unavailable: {0}")]
    BackendDown(LlmError),
}

pub struct Scheduler<'a> {
    backend: &'a dyn Backend,
    config: SchedulerConfig,
}

impl<'a> Scheduler<'a> {
    pub fn new(backend: &'a dyn Backend, config: SchedulerConfig) -> Result<Scheduler<'a>, SchedulerError> {
        if config.window == 0 {
            return Err(SchedulerError::Config("window must be at least 1".into()));
        }
        Ok(Scheduler { backend, config })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    /// Runs every request and returns outcomes in submission order.
    pub fn submit(&self, requests: Vec<InferenceRequest>) -> Result<(Vec<RowOutcome>, MetricsReport), SchedulerError> {
        let mut out = Vec::with_capacity(requests.len());
        let metrics = self.submit_streaming(requests, |o| out.push(o))?;
        Ok((out, metrics))
    }

    /// Runs every request, handing each outcome to `on_row` as soon as all
    /// earlier rows have been handed over.
    pub fn submit_streaming(
        &self,
        requests: Vec<InferenceRequest>,
        on_row: impl FnMut(RowOutcome),
    ) -> Result<MetricsReport, SchedulerError> {
        let started = Instant::now();
        let mut tags = HashSet::with_capacity(requests.len());
        let mut positions = HashMap::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if !tags.insert(r.row_tag) {
                return Err(SchedulerError::DuplicateRowTag(r.row_tag));
            }
            if positions.insert(r.request_id, i).is_some() {
                return Err(SchedulerError::DuplicateRequestId(r.request_id));
            }
        }
        let slots = match (self.backend.is_simulated(), self.backend.concurrency()) {
            (true, Some(s)) => s,
            _ => self.config.window,
        };
        let mut run = Run::new(&self.config, self.backend, requests, positions, slots, on_row);
        let result = if self.backend.is_simulated() {
            let mut d = SimDispatcher::new(self.backend, slots);
            let r = run.drive(&mut d);
            let (makespan, busy) = d.timing();
            run.metrics.finish_run(makespan.as_secs_f64() * 1000.0, busy.as_secs_f64() * 1000.0);
            r
        } else {
            std::thread::scope(|s| {
                let mut d = ThreadDispatcher::spawn(s, self.backend, self.config.window);
                let r = run.drive(&mut d);
                d.close();
                let (makespan, busy) = d.timing();
                run.metrics.finish_run(makespan.as_secs_f64() * 1000.0, busy.as_secs_f64() * 1000.0);
                run.metrics.max_in_flight = run.metrics.max_in_flight.max(d.live_peak.load(std::sync::atomic::Ordering::SeqCst));
                r
            })
        };
        let mut metrics = run.metrics;
        metrics.wall_clock_ms = started.elapsed().as_secs_f64() * 1000.0;
        result.map(|_| metrics)
    }
}

/// State of one `submit` call.
struct Run<'c, F> {
    config: &'c SchedulerConfig,
    pending: VecDeque<InferenceRequest>,
    positions: HashMap<u64, usize>,
    ready: BTreeMap<usize, RowOutcome>,
    next_to_emit: usize,
    total: usize,
    next_batch_id: u64,
    on_row: F,
    metrics: MetricsReport,
}

impl<'c, F: FnMut(RowOutcome)> Run<'c, F> {
    fn new(
        config: &'c SchedulerConfig,
        backend: &dyn Backend,
        requests: Vec<InferenceRequest>,
        positions: HashMap<u64, usize>,
        slots: usize,
        on_row: F,
    ) -> Self {
        let mut metrics = MetricsReport::new(config.window, slots);
        metrics.rows_submitted = requests.len() as u64;
        let d = backend.descriptor();
        metrics.validate_retry_fallback = d.kind == BackendKind::OpenaiCompatibleHttp
            && d.dialect == ConstraintDialect::None
            && requests.iter().any(|r| r.constrained);
        Run {
            config,
            total: requests.len(),
            pending: requests.into(),
            positions,
            ready: BTreeMap::new(),
            next_to_emit: 0,
            next_batch_id: 0,
            on_row,
            metrics,
        }
    }

    fn drive(&mut self, d: &mut dyn Dispatcher) -> Result<(), SchedulerError> {
        while self.next_to_emit < self.total {
            while d.in_flight() < self.config.window {
                let Some(env) = assemble_batch(&mut self.pending, self.config, self.next_batch_id) else { break };
                self.next_batch_id += 1;
                self.record_dispatch(&env);
                d.dispatch(env);
                self.metrics.max_in_flight = self.metrics.max_in_flight.max(d.in_flight());
            }
            if d.in_flight() == 0 {
                // Everything dispatched has been answered and nothing is
                // pending, so every row must already be emitted.
                unreachable!("scheduler stalled with {} rows outstanding", self.total - self.next_to_emit);
            }
            let finished = d.next_finished();
            self.handle(finished)?;
        }
        Ok(())
    }

    fn record_dispatch(&mut self, env: &BatchEnvelope) {
        self.metrics.requests_issued += 1;
        *self.metrics.envelopes.entry(env.class).or_default() += 1;
        if env.over_budget {
            self.metrics.truncation_warnings += 1;
        }
        for r in &env.requests {
            *self.metrics.operator_llm_calls.entry(r.row_tag.operator).or_default() += 1;
            if r.attempt > 0 {
                self.metrics.retries += 1;
            }
        }
    }

    fn handle(&mut self, f: Finished) -> Result<(), SchedulerError> {
        self.metrics.envelope_latencies_ms.push(f.latency.as_secs_f64() * 1000.0);
        let completion = match f.result {
            Ok(c) => c,
            Err(e) => {
                self.metrics.transport_errors += 1;
                if !e.is_transient() {
                    return Err(SchedulerError::BackendDown(e));
                }
                let mut retry = Vec::new();
                for r in f.envelope.requests {
                    if r.attempt + 1 >= self.config.max_attempts() {
                        return Err(SchedulerError::BackendDown(e));
                    }
                    let mut next = r.clone();
                    next.attempt += 1;
                    retry.push(next);
                }
                for r in retry.into_iter().rev() {
                    self.pending.push_front(r);
                }
                return Ok(());
            }
        };
        self.metrics.prompt_tokens += completion.usage.prompt_tokens;
        self.metrics.output_tokens += completion.usage.output_tokens;
        let answers: Vec<Option<String>> = if f.envelope.requests.len() == 1 {
            vec![Some(completion.text)]
        } else {
            parse_packed_answers(&completion.text, f.envelope.requests.len())
        };
        let mut retry = Vec::new();
        for (req, answer) in f.envelope.requests.into_iter().zip(answers) {
            let checked = match answer {
                None => Err(ValidationError { reason: ValidationReason::SchemaViolation, raw: String::new() }),
                Some(text) if self.config.validate => validate_output(&req.contract, &text),
                Some(text) => Ok(TypedValue::Text(text)),
            };
            match checked {
                Ok(v) => self.complete(&req, Ok(v)),
                Err(err) => {
                    self.metrics.validation_failures += 1;
                    if req.attempt + 1 < self.config.max_attempts() {
                        retry.push(req.next_attempt());
                    } else {
                        self.metrics.null_rows += 1;
                        if self.config.on_exhausted == ExhaustionPolicy::FailQuery {
                            return Err(SchedulerError::QueryAborted {
                                row_tag: req.row_tag,
                                attempts: req.attempt + 1,
                                last: err,
                            });
                        }
                        let attempts = req.attempt + 1;
                        self.complete(&req, Err(RowError::Exhausted { attempts, last: err }));
                    }
                }
            }
        }
        for r in retry.into_iter().rev() {
            self.pending.push_front(r);
        }
        Ok(())
    }

    fn complete(&mut self, req: &InferenceRequest, result: Result<TypedValue, RowError>) {
        let pos = self.positions[&req.request_id];
        let outcome = RowOutcome { row_tag: req.row_tag, request_id: req.request_id, attempts: req.attempt + 1, result };
        self.ready.insert(pos, outcome);
        self.metrics.max_reorder_buffer = self.metrics.max_reorder_buffer.max(self.ready.len() - 1);
        while let Some(o) = self.ready.remove(&self.next_to_emit) {
            (self.on_row)(o);
            self.next_to_emit += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{LatencyModel, MockBackend, MockConfig, MockMode};
    use crate::sql::OutputContract;

    fn requests(n: usize, contract: OutputContract) -> Vec<InferenceRequest> {
        let c = Arc::new(contract);
        (0..n)
            .map(|i| InferenceRequest::new(i as u64, format!("prompt {i}"), c.clone(), RowTag { operator: 1, ordinal: i }, 4))
            .collect()
    }

    fn yes_no() -> OutputContract {
        OutputContract::Choice { options: vec!["Yes".into(), "No".into()] }
    }

    #[test]
    fn window_bounds_makespan() {
        let mock = MockBackend::faithful();
        for (w, expect) in [(1, 6400.0), (8, 800.0)] {
            let s = Scheduler::new(&mock, SchedulerConfig { window: w, ..Default::default() }).unwrap();
            let (out, m) = s.submit(requests(64, OutputContract::FreeText)).unwrap();
            assert_eq!(out.len(), 64);
            assert!((m.makespan_ms - expect).abs() < 1e-6, "{w}: {}", m.makespan_ms);
            assert_eq!(m.max_in_flight, w);
        }
    }

    #[test]
    fn slots_cap_throughput() {
        let mock = MockBackend::new(MockConfig { slots: 2, ..Default::default() });
        let s = Scheduler::new(&mock, SchedulerConfig { window: 8, ..Default::default() }).unwrap();
        let (_, m) = s.submit(requests(8, OutputContract::FreeText)).unwrap();
        assert!((m.makespan_ms - 400.0).abs() < 1e-6);
        assert!((m.busy_fraction - 1.0).abs() < 1e-9);
    }

    #[test]
    fn outputs_in_submission_order() {
        let mock = MockBackend::new(MockConfig {
            latency: LatencyModel::Uniform { lo_ms: 1.0, hi_ms: 200.0 },
            ..Default::default()
        });
        let s = Scheduler::new(&mock, SchedulerConfig::default()).unwrap();
        let (out, m) = s.submit(requests(100, yes_no())).unwrap();
        let ordinals: Vec<usize> = out.iter().map(|o| o.row_tag.ordinal).collect();
        assert_eq!(ordinals, (0..100).collect::<Vec<_>>());
        assert!(m.max_reorder_buffer > 0);
    }

    #[test]
    fn retries_until_valid_or_exhausted() {
        let mock = MockBackend::new(MockConfig { mode: MockMode::Noisy(0.3), ..Default::default() });
        let s = Scheduler::new(&mock, SchedulerConfig { max_retries: 8, ..Default::default() }).unwrap();
        let (out, m) = s.submit(requests(500, yes_no())).unwrap();
        assert!(out.iter().all(|o| o.result.is_ok() && o.attempts <= 9));
        assert!(m.retries > 0);
        assert_eq!(m.requests_issued, mock.calls());
        assert_eq!(m.requests_issued, 500 + m.retries);
    }

    #[test]
    fn exhaustion_policies() {
        let mock = MockBackend::new(MockConfig { mode: MockMode::Noisy(1.0), ..Default::default() });
        let cfg = SchedulerConfig { max_retries: 2, ..Default::default() };
        let (out, m) = Scheduler::new(&mock, cfg.clone()).unwrap().submit(requests(3, yes_no())).unwrap();
        assert!(out.iter().all(|o| matches!(o.result, Err(RowError::Exhausted { attempts: 3, .. }))));
        assert_eq!((m.null_rows, m.requests_issued), (3, 9));
        let cfg = SchedulerConfig { on_exhausted: ExhaustionPolicy::FailQuery, ..cfg };
        let err = Scheduler::new(&mock, cfg).unwrap().submit(requests(3, yes_no())).unwrap_err();
        assert!(matches!(err, SchedulerError::QueryAborted { attempts: 3, .. }));
    }

    #[test]
    fn validation_off_passes_raw_text() {
        let mock = MockBackend::new(MockConfig { mode: MockMode::Noisy(1.0), ..Default::default() });
        let cfg = SchedulerConfig { validate: false, ..Default::default() };
        let (out, m) = Scheduler::new(&mock, cfg).unwrap().submit(requests(4, yes_no())).unwrap();
        assert!(out.iter().all(|o| matches!(&o.result, Ok(TypedValue::Text(t)) if t.contains("because"))));
        assert_eq!(m.retries, 0);
    }

    #[test]
    fn duplicate_tags_rejected() {
        let mock = MockBackend::faithful();
        let mut reqs = requests(2, yes_no());
        reqs[1].row_tag = reqs[0].row_tag;
        let err = Scheduler::new(&mock, SchedulerConfig::default()).unwrap().submit(reqs).unwrap_err();
        assert!(matches!(err, SchedulerError::DuplicateRowTag(_)));
        assert!(Scheduler::new(&mock, SchedulerConfig { window: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn budgeted_packs_rows() {
        let mock = MockBackend::faithful();
        let cfg = SchedulerConfig { rows_per_request: RowsPerRequest::Budgeted, context_window: 200, ..Default::default() };
        let (out, m) = Scheduler::new(&mock, cfg).unwrap().submit(requests(40, yes_no())).unwrap();
        assert_eq!(out.len(), 40);
        assert!(out.iter().all(|o| o.result.is_ok()));
        assert!(m.requests_issued < 40, "{}", m.requests_issued);
        for (o, r) in out.iter().zip(requests(40, yes_no())) {
            let expect = crate::llm::faithful_answer(&r.contract, &r.rendered_prompt);
            assert_eq!(o.result.as_ref().unwrap(), &TypedValue::Label(expect));
        }
    }

    #[test]
    fn threaded_dispatch_respects_window() {
        let mock = MockBackend::new(MockConfig {
            real_time: true,
            latency: LatencyModel::Fixed { ms: 5.0 },
            ..Default::default()
        });
        let s = Scheduler::new(&mock, SchedulerConfig { window: 4, ..Default::default() }).unwrap();
        let (out, m) = s.submit(requests(32, yes_no())).unwrap();
        assert_eq!(out.iter().map(|o| o.row_tag.ordinal).collect::<Vec<_>>(), (0..32).collect::<Vec<_>>());
        assert!(m.max_in_flight <= 4);
        assert!(m.makespan_ms >= 40.0, "{}", m.makespan_ms);
    }
}
