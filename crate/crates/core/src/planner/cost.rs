//! Cost model: LLM prefill and decode tokens dominate, relational work is a
//! small tie-breaker.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LlmAnnotation, LogicalPlan, Operator, PlanNode, SimilarityMode};
use crate::catalog::{Catalog, ColumnStats};
use crate::sql::ast::CmpOp;
use crate::sql::{BoundConjunct, BoundQuery, ColumnId, LlmArg, OutputContract};

/// Line placed between retrieved contexts when they fill one argument.
pub const CONTEXT_SEPARATOR: &str = "\n---\n";

pub trait StatsSource {
    fn row_count(&self, table: &str) -> Option<u64>;
    fn column_stats(&self, table: &str, column: &str) -> Option<ColumnStats>;
    /// Entries in the vector index over `table.column`.
    fn index_len(&self, table: &str, column: &str) -> Option<u64>;
}

impl StatsSource for Catalog {
    fn row_count(&self, table: &str) -> Option<u64> {
        self.get_table(table).ok().map(|t| t.row_count() as u64)
    }

    fn column_stats(&self, table: &str, column: &str) -> Option<ColumnStats> {
        Catalog::column_stats(self, table, column).ok()
    }

    fn index_len(&self, table: &str, column: &str) -> Option<u64> {
        self.index(table, column).map(|i| i.len() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub c_prefill: f64,
    pub c_decode: f64,
    /// Weight of one relationally processed row.
    pub epsilon: f64,
    pub decode_tokens_choice: u64,
    pub decode_tokens_int: u64,
    pub decode_tokens_text: u64,
    pub decode_tokens_record: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            c_prefill: 1.0,
            c_decode: 2.0,
            epsilon: 0.001,
            decode_tokens_choice: 1,
            decode_tokens_int: 1,
            decode_tokens_text: 256,
            decode_tokens_record: 256,
        }
    }
}

impl PlannerConfig {
    /// Expected output tokens for one call under `contract`.
    pub fn decode_tokens(&self, contract: &OutputContract) -> u64 {
        match contract {
            OutputContract::Choice { .. } => self.decode_tokens_choice,
            OutputContract::IntRange { .. } => self.decode_tokens_int,
            OutputContract::FreeText => self.decode_tokens_text,
            OutputContract::SchemaText { .. } => self.decode_tokens_record,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostEstimate {
    pub llm_calls: u64,
    pub prefill_tokens: u64,
    pub decode_tokens: u64,
    /// Rows processed by relational operators.
    pub relational_cost: f64,
    pub total: f64,
}

impl CostEstimate {
    fn finish(mut self, cfg: &PlannerConfig) -> CostEstimate {
        self.total = cfg.c_prefill * self.prefill_tokens as f64
            + cfg.c_decode * self.decode_tokens as f64
            + cfg.epsilon * self.relational_cost;
        self
    }
}

/// Estimated inputs of one LLM call site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SiteEstimate {
    pub input_rows: f64,
    /// Distinct argument tuples among the input rows.
    pub distinct_args: f64,
}

/// Fills in row and call estimates on every node and returns the plan's cost.
pub fn annotate(plan: &mut LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> CostEstimate {
    annotate_sites(plan, stats, cfg).0
}

pub fn estimate_cost(plan: &LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> CostEstimate {
    let mut p = plan.clone();
    annotate(&mut p, stats, cfg)
}

pub(crate) fn annotate_sites(
    plan: &mut LogicalPlan,
    stats: &dyn StatsSource,
    cfg: &PlannerConfig,
) -> (CostEstimate, BTreeMap<usize, SiteEstimate>) {
    let query = plan.query.clone();
    let mut est = Estimator {
        q: &query,
        stats,
        cfg,
        annotations: &plan.annotations,
        cost: CostEstimate::default(),
        sites: BTreeMap::new(),
        groups: 1.0,
    };
    est.node(&mut plan.root);
    let cost = est.cost.finish(cfg);
    (cost, est.sites)
}

struct Estimator<'a> {
    q: &'a BoundQuery,
    stats: &'a dyn StatsSource,
    cfg: &'a PlannerConfig,
    annotations: &'a BTreeMap<usize, LlmAnnotation>,
    cost: CostEstimate,
    sites: BTreeMap<usize, SiteEstimate>,
    groups: f64,
}

fn tokens(chars: f64) -> u64 {
    (chars / 4.0).ceil().max(0.0) as u64
}

impl Estimator<'_> {
    fn stats_of(&self, c: ColumnId) -> Option<ColumnStats> {
        let (t, col) = self.q.stats_key(c);
        self.stats.column_stats(t, col)
    }

    fn distinct(&self, c: ColumnId, rows: f64) -> f64 {
        let d = self.stats_of(c).map(|s| s.distinct_count as f64).unwrap_or(rows);
        d.min(rows)
    }

    fn selectivity(&self, conj: &BoundConjunct) -> f64 {
        match conj {
            BoundConjunct::Constant(true) => 1.0,
            BoundConjunct::Constant(false) => 0.0,
            BoundConjunct::Compare { op: CmpOp::Eq, left, right } => {
                use crate::sql::Operand::{Column, Literal};
                match (left, right) {
                    (Column(c), Literal(_)) | (Literal(_), Column(c)) => {
                        let d = self.stats_of(*c).map(|s| s.distinct_count).unwrap_or(0);
                        if d == 0 {
                            0.5
                        } else {
                            1.0 / d as f64
                        }
                    }
                    _ => 0.5,
                }
            }
            _ => 0.5,
        }
    }

    fn arg_chars(&self, arg: &LlmArg) -> f64 {
        match arg {
            LlmArg::Column(c) => self.stats_of(*c).map(|s| s.avg_text_length).unwrap_or(0.0),
            LlmArg::Literal(v) => v.render().chars().count() as f64,
            LlmArg::Similarity { k, index, .. } => {
                let m = self.stats.index_len(&index.table, &index.column).unwrap_or(*k as u64);
                let kk = (*k as u64).min(m) as f64;
                let avg = self.stats.column_stats(&index.table, &index.column).map(|s| s.avg_text_length).unwrap_or(0.0);
                kk * avg + (kk - 1.0).max(0.0) * CONTEXT_SEPARATOR.chars().count() as f64
            }
        }
    }

    /// Charges one LLM call site over `n` input rows; returns its calls.
    fn site(&mut self, invocation: usize, n: f64) -> f64 {
        let inv = &self.q.invocations[invocation];
        let ann = self.annotations.get(&invocation).cloned().unwrap_or_default();
        let distinct = inv.input_columns().iter().fold(1.0, |acc, c| acc * self.distinct(*c, n)).min(n);
        self.sites.insert(invocation, SiteEstimate { input_rows: n, distinct_args: distinct });
        let calls = if ann.cacheable { distinct } else { n }.round().max(0.0) as u64;

        let lens: Vec<f64> = inv.args.iter().map(|a| self.arg_chars(a)).collect();
        let occ = inv.template.slot_occurrences();
        let mut total = inv.template.literal_len() as f64;
        for (i, len) in lens.iter().enumerate() {
            total += match occ.get(i) {
                Some(o) => *o as f64 * len,
                None => 1.0 + len,
            };
        }
        let per_call = tokens(total);
        let prefill = match ann.sort_by {
            None => calls * per_call,
            Some(sort) => {
                let static_chars = inv.template.static_prefix().chars().count() as f64;
                let (shared_chars, groups) = match inv.template.leading_slot() {
                    Some((s, after)) if inv.args.get(s) == Some(&LlmArg::Column(sort)) => {
                        (static_chars + lens[s] + after as f64, self.distinct(sort, n).round() as u64)
                    }
                    _ => (static_chars, 1),
                };
                let shared = tokens(shared_chars).min(per_call);
                let groups = groups.min(calls);
                groups * shared + calls * (per_call - shared)
            }
        };
        if ann.sort_by.is_some() && n >= 2.0 {
            self.cost.relational_cost += n * n.log2();
        }
        self.cost.llm_calls += calls;
        self.cost.prefill_tokens += prefill;
        self.cost.decode_tokens += calls * self.cfg.decode_tokens(&inv.contract);
        calls as f64
    }

    fn node(&mut self, node: &mut PlanNode) -> f64 {
        let mut calls = 0.0;
        let rows = match node.op.clone() {
            Operator::Scan { table } => {
                let r = self.stats.row_count(&self.q.tables[table].name).unwrap_or(0) as f64;
                self.cost.relational_cost += r;
                r
            }
            Operator::Filter { conjuncts } => {
                let mut r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                for c in conjuncts {
                    let conj = &self.q.conjuncts[c];
                    if let BoundConjunct::Llm { invocation, .. } = conj {
                        calls += self.site(*invocation, r);
                        r *= 0.5;
                    } else {
                        r *= self.selectivity(conj);
                    }
                }
                r
            }
            Operator::LlmFilter { conjunct } => {
                let r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                let BoundConjunct::Llm { invocation, .. } = self.q.conjuncts[conjunct] else { unreachable!() };
                calls += self.site(invocation, r);
                r * 0.5
            }
            Operator::HashJoin { join } => {
                let a = self.node(&mut node.children[0]);
                let b = self.node(&mut node.children[1]);
                let j = self.q.joins[join];
                let a_tables = node.children[0].tables();
                let rows_of = |c: ColumnId| if a_tables.contains(&c.table) { a } else { b };
                let dl = self.distinct(j.left, rows_of(j.left));
                let dr = self.distinct(j.right, rows_of(j.right));
                let d = dl.max(dr);
                let out = if d > 0.0 { a * b / d } else { 0.0 };
                self.cost.relational_cost += a + b + out;
                out
            }
            Operator::SimilarityTopK { invocation, mode } => {
                let r = self.node(&mut node.children[0]);
                let (_, _, k, index) = self.q.invocations[invocation].similarity().expect("similarity argument");
                let m = self.stats.index_len(&index.table, &index.column).unwrap_or(0) as f64;
                self.cost.relational_cost += match mode {
                    SimilarityMode::CrossJoin => r * m,
                    SimilarityMode::Probe => r * (k as f64).min(m),
                };
                r
            }
            Operator::HashGroupBy { keys } => {
                let r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                self.groups = if keys.is_empty() {
                    1.0
                } else {
                    keys.iter().fold(1.0, |acc, k| acc * self.distinct(*k, r)).min(r)
                };
                r
            }
            Operator::LlmAggregateMap { invocations } | Operator::LlmProject { invocations } => {
                let r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                for i in invocations {
                    calls += self.site(i, r);
                }
                r
            }
            Operator::Aggregate => {
                let r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                if self.q.group_by.is_empty() {
                    1.0
                } else {
                    self.groups
                }
            }
            Operator::Output => {
                let r = self.node(&mut node.children[0]);
                self.cost.relational_cost += r;
                r
            }
        };
        node.est_rows = rows;
        node.est_llm_calls = calls;
        rows
    }
}

/// Selectivity used to order cheap conjuncts.
pub(crate) fn conjunct_selectivity(q: &BoundQuery, stats: &dyn StatsSource, conj: &BoundConjunct) -> f64 {
    let cfg = PlannerConfig::default();
    let empty = BTreeMap::new();
    let e = Estimator { q, stats, cfg: &cfg, annotations: &empty, cost: CostEstimate::default(), sites: BTreeMap::new(), groups: 1.0 };
    e.selectivity(conj)
}

/// Argument column with the fewest distinct values; earlier arguments win
/// ties.
pub(crate) fn lowest_distinct_column(q: &BoundQuery, stats: &dyn StatsSource, columns: &[ColumnId]) -> Option<ColumnId> {
    let d = |c: &ColumnId| {
        let (t, col) = q.stats_key(*c);
        stats.column_stats(t, col).map(|s| s.distinct_count).unwrap_or(u64::MAX)
    };
    let mut best: Option<ColumnId> = None;
    for c in columns {
        if best.is_none_or(|b| d(c) < d(&b)) {
            best = Some(*c);
        }
    }
    best
}
