//! Materializing executor for logical plans. Relational operators run on
//! the calling thread; LLM call sites go through the scheduler, one
//! submission per operator over the rows that reach it.

mod llm_site;
mod output;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{write_csv, write_ndjson, OutputFormat};

use crate::catalog::Catalog;
use crate::llm::{Backend, LlmError};
use crate::planner::{LogicalPlan, Operator, PlanNode, PlannerConfig, SimilarityMode, CONTEXT_SEPARATOR};
use crate::scheduler::{MetricsReport, SchedulerConfig, SchedulerError};
use crate::sql::ast::CmpOp;
use crate::sql::{BoundConjunct, BoundQuery, BoundSelect, ColumnId, IndexTarget, Operand};
use crate::value::{Row, Value};
use crate::vector::{Neighbor, VectorError};
use llm_site::DedupCache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecOptions {
    /// Rows per relational batch.
    pub morsel_size: usize,
    /// Reuse results for repeated (call, prompt) pairs within a query.
    pub dedup: bool,
    /// Largest intermediate an operator may materialize.
    pub max_intermediate_rows: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { morsel_size: 128, dedup: true, max_intermediate_rows: 5_000_000 }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("no vector index on {0}")]
    MissingIndex(IndexTarget),
    #[error("cannot parse the value {value:?} as a number in {context}")]
    CannotParse { value: String, context: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("intermediate result of {rows} rows exceeds the limit of {limit}")]
    IntermediateLimit { rows: u64, limit: u64 },
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub metrics: MetricsReport,
}

/// Where a relation column comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Base(ColumnId),
    /// Retrieved contexts for an invocation's similarity argument.
    Context(usize),
    /// Output of an LLM invocation.
    Llm(usize),
    /// Group ordinal assigned by the group-by.
    Group,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Relation {
    pub slots: Vec<Slot>,
    pub rows: Vec<Row>,
}

impl Relation {
    pub fn position(&self, slot: Slot) -> usize {
        self.slots.iter().position(|s| *s == slot).unwrap_or_else(|| panic!("slot {slot:?} missing from relation"))
    }

    fn push_column(&mut self, slot: Slot, values: Vec<Value>) {
        debug_assert_eq!(values.len(), self.rows.len());
        self.slots.push(slot);
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
    }
}

pub struct Executor<'a> {
    catalog: &'a Catalog,
    backend: &'a dyn Backend,
    scheduler: SchedulerConfig,
    planner: PlannerConfig,
    options: ExecOptions,
}

impl<'a> Executor<'a> {
    pub fn new(
        catalog: &'a Catalog,
        backend: &'a dyn Backend,
        scheduler: SchedulerConfig,
        planner: PlannerConfig,
        options: ExecOptions,
    ) -> Executor<'a> {
        Executor { catalog, backend, scheduler, planner, options }
    }

    pub fn execute(&self, plan: &LogicalPlan) -> Result<QueryResult, ExecError> {
        let started = Instant::now();
        let slots = match (self.backend.is_simulated(), self.backend.concurrency()) {
            (true, Some(s)) => s,
            _ => self.scheduler.window,
        };
        let mut run = Run {
            exec: self,
            plan,
            q: &plan.query,
            metrics: MetricsReport::new(self.scheduler.window, slots),
            cache: DedupCache::default(),
            next_request: 0,
        };
        let rel = run.node(&plan.root)?;
        let mut metrics = run.metrics;
        metrics.dedup_hits = run.cache.hits;
        metrics.dedup_lookups = run.cache.lookups;
        metrics.wall_clock_ms = started.elapsed().as_secs_f64() * 1000.0;
        Ok(QueryResult { columns: plan.query.output_names(), rows: rel.rows, metrics })
    }
}

pub(crate) struct Run<'e, 'a> {
    exec: &'e Executor<'a>,
    plan: &'e LogicalPlan,
    q: &'e BoundQuery,
    metrics: MetricsReport,
    cache: DedupCache,
    next_request: u64,
}

impl Run<'_, '_> {
    fn note_intermediate(&mut self, rows: u64) -> Result<(), ExecError> {
        self.metrics.peak_intermediate_rows = self.metrics.peak_intermediate_rows.max(rows);
        let limit = self.exec.options.max_intermediate_rows;
        if rows > limit {
            return Err(ExecError::IntermediateLimit { rows, limit });
        }
        Ok(())
    }

    fn node(&mut self, node: &PlanNode) -> Result<Relation, ExecError> {
        let rel = match &node.op {
            Operator::Scan { table } => {
                let t = &self.q.tables[*table].table;
                Relation {
                    slots: (0..t.schema().arity()).map(|c| Slot::Base(ColumnId { table: *table, column: c })).collect(),
                    rows: t.rows().to_vec(),
                }
            }
            Operator::Filter { conjuncts } => {
                let input = self.node(node.child())?;
                self.filter(node.id, input, conjuncts)?
            }
            Operator::LlmFilter { conjunct } => {
                let input = self.node(node.child())?;
                self.filter(node.id, input, &[*conjunct])?
            }
            Operator::HashJoin { join } => {
                let probe = self.node(&node.children[0])?;
                let build = self.node(&node.children[1])?;
                self.hash_join(*join, probe, build)?
            }
            Operator::SimilarityTopK { invocation, mode } => {
                let input = self.node(node.child())?;
                self.similarity(*invocation, *mode, input)?
            }
            Operator::HashGroupBy { keys } => {
                let mut input = self.node(node.child())?;
                let pos: Vec<usize> = keys.iter().map(|k| input.position(Slot::Base(*k))).collect();
                let mut groups: HashMap<Vec<Value>, i64> = HashMap::new();
                let ordinals: Vec<Value> = input
                    .rows
                    .iter()
                    .map(|r| {
                        let key: Vec<Value> = pos.iter().map(|p| r[*p].clone()).collect();
                        let next = groups.len() as i64;
                        Value::Int(*groups.entry(key).or_insert(next))
                    })
                    .collect();
                input.push_column(Slot::Group, ordinals);
                input
            }
            Operator::LlmAggregateMap { invocations } | Operator::LlmProject { invocations } => {
                let mut input = self.node(node.child())?;
                let all: Vec<usize> = (0..input.rows.len()).collect();
                for inv in invocations {
                    let values = self.llm_site(node.id, *inv, &input, &all)?;
                    input.push_column(Slot::Llm(*inv), values);
                }
                if matches!(node.op, Operator::LlmProject { .. }) {
                    self.project(input)
                } else {
                    input
                }
            }
            Operator::Aggregate => {
                let input = self.node(node.child())?;
                self.aggregate(input)?
            }
            Operator::Output => {
                let input = self.node(node.child())?;
                self.project(input)
            }
        };
        self.note_intermediate(rel.rows.len() as u64)?;
        Ok(rel)
    }

    fn operand<'r>(&self, rel: &Relation, row: &'r Row, o: &'r Operand) -> &'r Value {
        match o {
            Operand::Column(c) => &row[rel.position(Slot::Base(*c))],
            Operand::Literal(v) => v,
        }
    }

    /// Evaluates conjuncts one at a time over the rows that survived the
    /// previous ones, so an LLM conjunct only sees surviving rows.
    fn filter(&mut self, node_id: usize, input: Relation, conjuncts: &[usize]) -> Result<Relation, ExecError> {
        let mut alive: Vec<usize> = (0..input.rows.len()).collect();
        for &c in conjuncts {
            if alive.is_empty() {
                break;
            }
            let conj = &self.q.conjuncts[c];
            alive = match conj {
                BoundConjunct::Llm { invocation, op, expected } => {
                    let values = self.llm_site(node_id, *invocation, &input, &alive)?;
                    alive
                        .into_iter()
                        .zip(values)
                        .filter(|(_, v)| !v.is_null() && compare(v, *op, expected) == Some(true))
                        .map(|(i, _)| i)
                        .collect()
                }
                _ => {
                    let mut keep = Vec::with_capacity(alive.len());
                    for morsel in alive.chunks(self.exec.options.morsel_size.max(1)) {
                        for &i in morsel {
                            if self.eval_cheap(&input, &input.rows[i], conj)? {
                                keep.push(i);
                            }
                        }
                    }
                    keep
                }
            };
        }
        let Relation { slots, mut rows } = input;
        let mut taken: Vec<Option<Row>> = rows.drain(..).map(Some).collect();
        Ok(Relation { slots, rows: alive.into_iter().map(|i| taken[i].take().unwrap()).collect() })
    }

    fn eval_cheap(&self, rel: &Relation, row: &Row, conj: &BoundConjunct) -> Result<bool, ExecError> {
        Ok(match conj {
            BoundConjunct::Constant(b) => *b,
            BoundConjunct::Truthy(c) => match &row[rel.position(Slot::Base(*c))] {
                Value::Bool(b) => *b,
                Value::Null => false,
                other => return Err(ExecError::Type(format!("{} is not a boolean", other.render()))),
            },
            BoundConjunct::Compare { op, left, right } => {
                compare(self.operand(rel, row, left), *op, self.operand(rel, row, right)) == Some(true)
            }
            BoundConjunct::Llm { .. } => unreachable!("LLM conjunct evaluated as relational"),
        })
    }

    fn hash_join(&mut self, join: usize, probe: Relation, build: Relation) -> Result<Relation, ExecError> {
        let j = self.q.joins[join];
        let (probe_key, build_key) = if probe.slots.contains(&Slot::Base(j.left)) {
            (probe.position(Slot::Base(j.left)), build.position(Slot::Base(j.right)))
        } else {
            (probe.position(Slot::Base(j.right)), build.position(Slot::Base(j.left)))
        };
        let mut table: HashMap<Value, Vec<usize>> = HashMap::new();
        for (i, r) in build.rows.iter().enumerate() {
            if let Some(k) = join_key(&r[build_key]) {
                table.entry(k).or_default().push(i);
            }
        }
        let mut rows = Vec::new();
        for p in &probe.rows {
            let Some(k) = join_key(&p[probe_key]) else { continue };
            if let Some(matches) = table.get(&k) {
                for &b in matches {
                    let mut row = p.clone();
                    row.extend(build.rows[b].iter().cloned());
                    rows.push(row);
                }
            }
            self.note_intermediate(rows.len() as u64)?;
        }
        let mut slots = probe.slots;
        slots.extend(build.slots);
        Ok(Relation { slots, rows })
    }

    fn similarity(&mut self, invocation: usize, mode: SimilarityMode, mut input: Relation) -> Result<Relation, ExecError> {
        let inv = &self.q.invocations[invocation];
        let (_, query_col, k, target) = inv.similarity().expect("similarity argument");
        let index = self
            .exec
            .catalog
            .index(&target.table, &target.column)
            .ok_or_else(|| ExecError::MissingIndex(target.clone()))?;
        let corpus = self.exec.catalog.get_table(&target.table).map_err(|_| ExecError::MissingIndex(target.clone()))?;
        let text_col = corpus
            .schema()
            .index_of(&target.column)
            .ok_or_else(|| ExecError::MissingIndex(target.clone()))?;
        let qpos = input.position(Slot::Base(query_col));
        let n = input.rows.len();
        let mut contexts = Vec::with_capacity(n);
        let mut materialized: u64 = 0;
        for morsel in input.rows.chunks(self.exec.options.morsel_size.max(1)) {
            let texts: Vec<String> = morsel.iter().map(|r| r[qpos].render()).collect();
            let embeddings = self.exec.backend.embed(&texts)?;
            self.metrics.embedding_lookups += texts.len() as u64;
            for e in embeddings {
                let hits: Vec<Neighbor> = match mode {
                    SimilarityMode::Probe => index.top_k(e.as_slice(), k)?,
                    SimilarityMode::CrossJoin => {
                        let mut all = index.all_similarities(e.as_slice())?;
                        // Every (row, corpus entry) pair is held until the
                        // whole input has been scored.
                        materialized += all.len() as u64;
                        self.note_intermediate(materialized)?;
                        all.sort_by(crate::vector::rank_order);
                        all.truncate(k);
                        all
                    }
                };
                if mode == SimilarityMode::Probe {
                    materialized += hits.len() as u64;
                    self.note_intermediate(materialized)?;
                }
                let joined: Vec<String> =
                    hits.iter().map(|h| corpus.rows()[h.row_id as usize][text_col].render()).collect();
                contexts.push(Value::text(joined.join(CONTEXT_SEPARATOR)));
            }
        }
        input.push_column(Slot::Context(invocation), contexts);
        Ok(input)
    }

    fn select_value(&self, rel: &Relation, row: &Row, item: &BoundSelect) -> Value {
        match item {
            BoundSelect::Column { column, .. } => row[rel.position(Slot::Base(*column))].clone(),
            BoundSelect::Literal { value, .. } => value.clone(),
            BoundSelect::Llm { invocation, .. } => row[rel.position(Slot::Llm(*invocation))].clone(),
            BoundSelect::AvgLlm { .. } | BoundSelect::AvgColumn { .. } => unreachable!("aggregate outside Aggregate"),
        }
    }

    fn project(&self, input: Relation) -> Relation {
        let rows = input.rows.iter().map(|r| self.q.select.iter().map(|s| self.select_value(&input, r, s)).collect()).collect();
        Relation { slots: Vec::new(), rows }
    }

    fn aggregate(&self, input: Relation) -> Result<Relation, ExecError> {
        let gpos = input.position(Slot::Group);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, r) in input.rows.iter().enumerate() {
            let Value::Int(g) = r[gpos] else { unreachable!() };
            let g = g as usize;
            if g == groups.len() {
                groups.push(Vec::new());
            }
            groups[g].push(i);
        }
        // An ungrouped aggregate over no rows still yields one row.
        if groups.is_empty() && self.q.group_by.is_empty() {
            groups.push(Vec::new());
        }
        let mut rows = Vec::with_capacity(groups.len());
        for members in groups {
            let mut out = Vec::with_capacity(self.q.select.len());
            for item in &self.q.select {
                let v = match item {
                    BoundSelect::AvgLlm { invocation, name } => {
                        let p = input.position(Slot::Llm(*invocation));
                        average(members.iter().map(|i| &input.rows[*i][p]), name)?
                    }
                    BoundSelect::AvgColumn { column, name } => {
                        let p = input.position(Slot::Base(*column));
                        average(members.iter().map(|i| &input.rows[*i][p]), name)?
                    }
                    other => match members.first() {
                        Some(i) => self.select_value(&input, &input.rows[*i], other),
                        None => Value::Null,
                    },
                };
                out.push(v);
            }
            rows.push(out);
        }
        Ok(Relation { slots: Vec::new(), rows })
    }
}

/// SQL comparison; `None` when either side is null or incomparable.
fn compare(a: &Value, op: CmpOp, b: &Value) -> Option<bool> {
    let ord = a.sql_cmp(b)?;
    Some(match op {
        CmpOp::Eq => ord.is_eq(),
        CmpOp::NotEq => ord.is_ne(),
        CmpOp::Lt => ord.is_lt(),
        CmpOp::LtEq => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::GtEq => ord.is_ge(),
    })
}

/// Hash key for equi-joins: numbers compare by value across int and float.
fn join_key(v: &Value) -> Option<Value> {
    match v {
        Value::Null => None,
        Value::Int(i) => Some(Value::Float(*i as f64)),
        Value::Float(f) if *f == 0.0 => Some(Value::Float(0.0)),
        other => Some(other.clone()),
    }
}

/// Mean over non-null values with an exact integer sum. Text must parse as
/// a number; an answer carrying extra words does not.
fn average<'v>(values: impl Iterator<Item = &'v Value>, context: &str) -> Result<Value, ExecError> {
    let mut int_sum: i128 = 0;
    let mut float_sum = 0.0f64;
    let mut count: u64 = 0;
    for v in values {
        match v {
            Value::Null => continue,
            Value::Int(i) => int_sum += *i as i128,
            Value::Float(f) => float_sum += f,
            Value::Text(t) => {
                let s = t.trim();
                if let Ok(i) = s.parse::<i64>() {
                    int_sum += i as i128;
                } else if let Ok(f) = s.parse::<f64>() {
                    float_sum += f;
                } else {
                    return Err(ExecError::CannotParse { value: t.to_string(), context: context.to_string() });
                }
            }
            other => return Err(ExecError::Type(format!("AVG over {}", other.render()))),
        }
        count += 1;
    }
    if count == 0 {
        return Ok(Value::Null);
    }
    Ok(Value::Float((int_sum as f64 + float_sum) / count as f64))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_is_exact_and_skips_nulls() {
        let v = [Value::Int(2), Value::Null, Value::Int(4)];
        assert_eq!(average(v.iter(), "avg").unwrap(), Value::Float(3.0));
        assert_eq!(average([Value::Null].iter(), "avg").unwrap(), Value::Null);
        let big = [Value::Int(i64::MAX), Value::Int(i64::MAX)];
        assert_eq!(average(big.iter(), "avg").unwrap(), Value::Float(i64::MAX as f64));
    }

    #[test]
    fn average_rejects_chatty_text() {
        let v = [Value::text("3"), Value::text("4, because it is good")];
        let err = average(v.iter(), "averagescore").unwrap_err();
        assert!(err.to_string().contains("cannot parse the value"), "{err}");
        assert_eq!(average([Value::text(" 3 ")].iter(), "a").unwrap(), Value::Float(3.0));
    }

    #[test]
    fn comparisons_with_null_are_unknown() {
        assert_eq!(compare(&Value::Null, CmpOp::Eq, &Value::Int(1)), None);
        assert_eq!(compare(&Value::Int(1), CmpOp::Lt, &Value::Float(1.5)), Some(true));
        assert_eq!(join_key(&Value::Int(2)), join_key(&Value::Float(2.0)));
    }
}
