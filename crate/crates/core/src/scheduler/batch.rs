use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{RowsPerRequest, SchedulerConfig};
use crate::llm::{approx_tokens, InferenceRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchClass {
    Constrained,
    Unconstrained,
}

impl BatchClass {
    pub fn of(req: &InferenceRequest) -> BatchClass {
        if req.constrained {
            BatchClass::Constrained
        } else {
            BatchClass::Unconstrained
        }
    }
}

/// Requests sent to the backend together. Never empty and never mixes
/// constrained with unconstrained requests.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEnvelope {
    pub batch_id: u64,
    pub class: BatchClass,
    pub requests: Vec<InferenceRequest>,
    pub prompt_token_sum: u64,
    /// Set when a single request alone exceeds the token budget.
    pub over_budget: bool,
}

impl BatchEnvelope {
    pub fn reserved_output_tokens(&self) -> u64 {
        self.requests.iter().map(|r| u64::from(r.max_output_tokens)).sum()
    }
}

/// Prompt tokens a request adds to an envelope (the system prompt is
/// already subtracted from the budget).
pub fn request_tokens(req: &InferenceRequest) -> u64 {
    approx_tokens(&req.user_message())
}

/// Takes the next envelope off the front of `pending`.
///
/// `One` yields singletons. `Budgeted` fills greedily in arrival order with
/// requests of the head's class, stopping at the first request of the
/// other class or the first that would push prompt plus reserved output
/// tokens past the budget. A head request that alone exceeds the budget is
/// sent by itself and flagged.
pub fn assemble_batch(
    pending: &mut VecDeque<InferenceRequest>,
    config: &SchedulerConfig,
    batch_id: u64,
) -> Option<BatchEnvelope> {
    let head = pending.pop_front()?;
    let class = BatchClass::of(&head);
    let budget = config.token_budget();
    let mut used = request_tokens(&head) + u64::from(head.max_output_tokens);
    let mut env = BatchEnvelope {
        batch_id,
        class,
        prompt_token_sum: request_tokens(&head),
        over_budget: used > budget,
        requests: vec![head],
    };
    if config.rows_per_request == RowsPerRequest::One || env.over_budget {
        return Some(env);
    }
    while let Some(next) = pending.front() {
        if BatchClass::of(next) != class {
            break;
        }
        let cost = request_tokens(next) + u64::from(next.max_output_tokens);
        if used + cost > budget {
            break;
        }
        used += cost;
        let next = pending.pop_front().unwrap();
        env.prompt_token_sum += request_tokens(&next);
        env.requests.push(next);
    }
    Some(env)
}
