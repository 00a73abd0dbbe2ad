//! Evaluation of one LLM call site over a set of rows.

use std::collections::HashMap;
use std::sync::Arc;

use super::{ExecError, Relation, Run, Slot};
use crate::llm::{render_prompt, InferenceRequest, RowTag};
use crate::scheduler::Scheduler;
use crate::sql::LlmArg;
use crate::value::Value;

/// Per-query memo of (call shape, rendered prompt) to result.
#[derive(Debug, Default)]
pub(crate) struct DedupCache {
    entries: HashMap<(u64, String), Value>,
    pub hits: u64,
    pub lookups: u64,
}

enum Source {
    Cached(Value),
    /// Index into the request list of this submission.
    Pending(usize),
}

impl Run<'_, '_> {
    /// Values of invocation `inv` for `rows` of `rel`, in the order given.
    pub(super) fn llm_site(
        &mut self,
        node_id: usize,
        inv: usize,
        rel: &Relation,
        rows: &[usize],
    ) -> Result<Vec<Value>, ExecError> {
        let invocation = &self.q.invocations[inv];
        let fingerprint = invocation.fingerprint();
        let contract = Arc::new(invocation.contract.clone());
        let max_tokens = self.exec.planner.decode_tokens(&invocation.contract) as u32;
        let positions: Vec<Option<usize>> = invocation
            .args
            .iter()
            .map(|a| match a {
                LlmArg::Column(c) => Some(rel.position(Slot::Base(*c))),
                LlmArg::Similarity { .. } => Some(rel.position(Slot::Context(inv))),
                LlmArg::Literal(_) => None,
            })
            .collect();
        let sort_pos = self.plan.annotation(inv).sort_by.map(|c| rel.position(Slot::Base(c)));

        let mut sources = Vec::with_capacity(rows.len());
        let mut requests: Vec<(Option<Value>, InferenceRequest)> = Vec::new();
        let mut pending: HashMap<(u64, String), usize> = HashMap::new();
        for &i in rows {
            let row = &rel.rows[i];
            let args: Vec<Value> = invocation
                .args
                .iter()
                .zip(&positions)
                .map(|(a, p)| match (a, p) {
                    (LlmArg::Literal(v), _) => v.clone(),
                    (_, Some(p)) => row[*p].clone(),
                    _ => unreachable!(),
                })
                .collect();
            let prompt = render_prompt(invocation, &args)?;
            if self.exec.options.dedup {
                self.cache.lookups += 1;
                let key = (fingerprint, prompt);
                if let Some(v) = self.cache.entries.get(&key) {
                    self.cache.hits += 1;
                    sources.push(Source::Cached(v.clone()));
                    continue;
                }
                if let Some(&idx) = pending.get(&key) {
                    self.cache.hits += 1;
                    sources.push(Source::Pending(idx));
                    continue;
                }
                pending.insert(key.clone(), requests.len());
                sources.push(Source::Pending(requests.len()));
                requests.push((sort_pos.map(|p| row[p].clone()), self.request(node_id, key.1, &contract, max_tokens)));
            } else {
                sources.push(Source::Pending(requests.len()));
                requests.push((sort_pos.map(|p| row[p].clone()), self.request(node_id, prompt, &contract, max_tokens)));
            }
        }

        let mut results: Vec<Value> = vec![Value::Null; requests.len()];
        if !requests.is_empty() {
            let mut order: Vec<usize> = (0..requests.len()).collect();
            if sort_pos.is_some() {
                order.sort_by(|a, b| requests[*a].0.cmp(&requests[*b].0));
            }
            let by_id: HashMap<u64, usize> =
                requests.iter().enumerate().map(|(i, (_, r))| (r.request_id, i)).collect();
            let prompts: Vec<String> = requests.iter().map(|(_, r)| r.rendered_prompt.clone()).collect();
            let batch: Vec<InferenceRequest> = order.iter().map(|i| requests[*i].1.clone()).collect();
            let scheduler = Scheduler::new(self.exec.backend, self.exec.scheduler.clone())?;
            let (outcomes, metrics) = scheduler.submit(batch)?;
            self.metrics.absorb(&metrics);
            for o in outcomes {
                let idx = by_id[&o.request_id];
                results[idx] = match o.result {
                    Ok(v) => v.to_value(),
                    Err(_) => Value::Null,
                };
            }
            if self.exec.options.dedup {
                for (idx, prompt) in prompts.into_iter().enumerate() {
                    self.cache.entries.insert((fingerprint, prompt), results[idx].clone());
                }
            }
        }
        Ok(sources
            .into_iter()
            .map(|s| match s {
                Source::Cached(v) => v,
                Source::Pending(i) => results[i].clone(),
            })
            .collect())
    }

    fn request(
        &mut self,
        node_id: usize,
        prompt: String,
        contract: &Arc<crate::sql::OutputContract>,
        max_tokens: u32,
    ) -> InferenceRequest {
        let id = self.next_request;
        self.next_request += 1;
        InferenceRequest::new(
            id,
            prompt,
            Arc::clone(contract),
            RowTag { operator: node_id, ordinal: id as usize },
            max_tokens,
        )
    }
}
