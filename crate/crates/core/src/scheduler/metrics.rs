use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::BatchClass;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Counters for one or more scheduler runs. Everything except
/// `wall_clock_ms` is a deterministic function of the workload, seed and
/// configuration when the backend is simulated.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Rows handed to the scheduler.
    pub rows_submitted: u64,
    /// Backend invocations, including retries; a packed envelope counts once.
    pub requests_issued: u64,
    pub retries: u64,
    pub validation_failures: u64,
    pub transport_errors: u64,
    /// Rows that ran out of attempts and were emitted as null.
    pub null_rows: u64,
    pub dedup_hits: u64,
    pub dedup_lookups: u64,
    pub envelopes: BTreeMap<BatchClass, u64>,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub truncation_warnings: u64,
    /// Set when the backend cannot express a contract and enforcement
    /// relies on validation plus retries alone.
    pub validate_retry_fallback: bool,
    pub window: usize,
    pub max_in_flight: usize,
    /// Completed rows held back waiting for earlier rows.
    pub max_reorder_buffer: usize,
    pub envelope_latencies_ms: Vec<f64>,
    /// Backend-side time from first dispatch to last completion, summed
    /// over runs.
    pub makespan_ms: f64,
    pub busy_ms: f64,
    pub backend_slots: usize,
    /// Busy time over (slots × makespan): the utilization proxy.
    pub busy_fraction: f64,
    /// LLM calls and embedding lookups per plan operator id.
    pub operator_llm_calls: BTreeMap<usize, u64>,
    pub embedding_lookups: u64,
    pub peak_intermediate_rows: u64,
    pub wall_clock_ms: f64,
}

impl MetricsReport {
    pub fn new(window: usize, backend_slots: usize) -> MetricsReport {
        MetricsReport { schema_version: METRICS_SCHEMA_VERSION, window, backend_slots, ..Default::default() }
    }

    pub fn envelopes_of(&self, class: BatchClass) -> u64 {
        self.envelopes.get(&class).copied().unwrap_or(0)
    }

    fn recompute_busy_fraction(&mut self) {
        let denom = self.backend_slots.max(1) as f64 * self.makespan_ms;
        self.busy_fraction = if denom > 0.0 { self.busy_ms / denom } else { 0.0 };
    }

    pub(crate) fn finish_run(&mut self, makespan_ms: f64, busy_ms: f64) {
        self.makespan_ms = makespan_ms;
        self.busy_ms = busy_ms;
        self.recompute_busy_fraction();
    }

    /// Folds a later run into this one; runs are sequential, so their
    /// makespans add.
    pub fn absorb(&mut self, other: &MetricsReport) {
        self.rows_submitted += other.rows_submitted;
        self.requests_issued += other.requests_issued;
        self.retries += other.retries;
        self.validation_failures += other.validation_failures;
        self.transport_errors += other.transport_errors;
        self.null_rows += other.null_rows;
        self.dedup_hits += other.dedup_hits;
        self.dedup_lookups += other.dedup_lookups;
        for (k, v) in &other.envelopes {
            *self.envelopes.entry(*k).or_default() += v;
        }
        self.prompt_tokens += other.prompt_tokens;
        self.output_tokens += other.output_tokens;
        self.truncation_warnings += other.truncation_warnings;
        self.validate_retry_fallback |= other.validate_retry_fallback;
        self.window = self.window.max(other.window);
        self.max_in_flight = self.max_in_flight.max(other.max_in_flight);
        self.max_reorder_buffer = self.max_reorder_buffer.max(other.max_reorder_buffer);
        self.envelope_latencies_ms.extend_from_slice(&other.envelope_latencies_ms);
        self.makespan_ms += other.makespan_ms;
        self.busy_ms += other.busy_ms;
        self.backend_slots = self.backend_slots.max(other.backend_slots);
        for (k, v) in &other.operator_llm_calls {
            *self.operator_llm_calls.entry(*k).or_default() += v;
        }
        self.embedding_lookups += other.embedding_lookups;
        self.peak_intermediate_rows = self.peak_intermediate_rows.max(other.peak_intermediate_rows);
        self.recompute_busy_fraction();
    }

    /// JSON document with wall-clock fields moved under their own key so
    /// the rest can be compared byte for byte.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("metrics serialize");
        let obj = v.as_object_mut().unwrap();
        let wall = obj.remove("wall_clock_ms").unwrap();
        obj.insert("wall_clock".into(), serde_json::json!({ "total_ms": wall }));
        v
    }

    /// The document without wall-clock fields.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = self.to_json();
        v.as_object_mut().unwrap().remove("wall_clock");
        v
    }

    pub fn latency_percentile_ms(&self, q: f64) -> Option<f64> {
        if self.envelope_latencies_ms.is_empty() {
            return None;
        }
        let mut v = self.envelope_latencies_ms.clone();
        v.sort_by(f64::total_cmp);
        let idx = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
        Some(v[idx])
    }

    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("rows submitted".into(), self.rows_submitted.to_string()),
            ("requests issued".into(), self.requests_issued.to_string()),
            ("retries".into(), self.retries.to_string()),
            ("validation failures".into(), self.validation_failures.to_string()),
            ("null rows".into(), self.null_rows.to_string()),
            ("dedup hits / lookups".into(), format!("{} / {}", self.dedup_hits, self.dedup_lookups)),
            (
                "envelopes (constrained / unconstrained)".into(),
                format!("{} / {}", self.envelopes_of(BatchClass::Constrained), self.envelopes_of(BatchClass::Unconstrained)),
            ),
            ("prompt / output tokens".into(), format!("{} / {}", self.prompt_tokens, self.output_tokens)),
            ("window / max in flight".into(), format!("{} / {}", self.window, self.max_in_flight)),
            ("makespan ms".into(), format!("{:.1}", self.makespan_ms)),
            ("busy fraction".into(), format!("{:.3}", self.busy_fraction)),
            ("embedding lookups".into(), self.embedding_lookups.to_string()),
            ("peak intermediate rows".into(), self.peak_intermediate_rows.to_string()),
        ];
        if let Some(p50) = self.latency_percentile_ms(0.5) {
            rows.push(("envelope latency p50 / p99 ms".into(), format!("{p50:.1} / {:.1}", self.latency_percentile_ms(0.99).unwrap())));
        }
        if self.truncation_warnings > 0 {
            rows.push(("truncation warnings".into(), self.truncation_warnings.to_string()));
        }
        if self.validate_retry_fallback {
            rows.push(("constraint fallback".into(), "validate and retry".into()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorb_adds_and_recomputes() {
        let mut a = MetricsReport::new(8, 16);
        a.finish_run(100.0, 800.0);
        let mut b = MetricsReport::new(8, 16);
        b.finish_run(100.0, 0.0);
        b.requests_issued = 3;
        a.absorb(&b);
        assert_eq!(a.makespan_ms, 200.0);
        assert_eq!(a.requests_issued, 3);
        assert!((a.busy_fraction - 800.0 / (16.0 * 200.0)).abs() < 1e-12);
    }

    #[test]
    fn json_separates_wall_clock() {
        let mut m = MetricsReport::new(1, 1);
        m.wall_clock_ms = 12.5;
        let j = m.to_json();
        assert_eq!(j["wall_clock"]["total_ms"], 12.5);
        assert!(m.deterministic_json().get("wall_clock").is_none());
        assert_eq!(j["schema_version"], 1);
    }
}
