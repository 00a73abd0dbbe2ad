//! Logical plans for bound queries, LLM-aware rewrites and EXPLAIN output.

mod cost;
mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use cost::{annotate, estimate_cost, CostEstimate, PlannerConfig, StatsSource, CONTEXT_SEPARATOR};
pub use rules::{optimize, optimize_with_trace, Rule, RuleStep};

use crate::sql::{BoundConjunct, BoundQuery, BoundSelect, ColumnId, LlmArg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("column `{0}` must appear in GROUP BY or inside an aggregate")]
    NotGrouped(String),
    #[error("unsupported plan: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Score every (row, corpus entry) pair, then keep the top k per row.
    CrossJoin,
    /// One index probe per row returning k neighbors.
    Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Scan { table: usize },
    /// Conjuncts evaluated left to right with short-circuiting. Indexes into
    /// `BoundQuery::conjuncts`; may include LLM conjuncts before R2 runs.
    Filter { conjuncts: Vec<usize> },
    LlmFilter { conjunct: usize },
    HashJoin { join: usize },
    /// Attaches the retrieved contexts for one invocation's similarity
    /// argument to every row.
    SimilarityTopK { invocation: usize, mode: SimilarityMode },
    HashGroupBy { keys: Vec<ColumnId> },
    /// Per-row typed scores for the LLM calls inside `AVG`.
    LlmAggregateMap { invocations: Vec<usize> },
    /// One row per group with the select list evaluated.
    Aggregate,
    /// Final projection including LLM outputs.
    LlmProject { invocations: Vec<usize> },
    /// Final projection without LLM calls.
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub id: usize,
    pub op: Operator,
    pub children: Vec<PlanNode>,
    pub est_rows: f64,
    pub est_llm_calls: f64,
}

impl PlanNode {
    fn new(op: Operator, children: Vec<PlanNode>) -> PlanNode {
        PlanNode { id: 0, op, children, est_rows: 0.0, est_llm_calls: 0.0 }
    }

    pub fn child(&self) -> &PlanNode {
        &self.children[0]
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a PlanNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Base tables whose columns are available above this node.
    pub fn tables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.walk(&mut |n| {
            if let Operator::Scan { table } = n.op {
                out.insert(table);
            }
        });
        out
    }
}

/// Per-invocation annotations set by the optimizer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LlmAnnotation {
    /// Repeated argument tuples are expected; estimated calls use the
    /// distinct count.
    pub cacheable: bool,
    /// Submit rows sorted by this column so equal prompt prefixes are
    /// adjacent.
    pub sort_by: Option<ColumnId>,
}

#[derive(Debug, Clone)]
pub struct LogicalPlan {
    pub query: Arc<BoundQuery>,
    pub root: PlanNode,
    pub annotations: BTreeMap<usize, LlmAnnotation>,
}

impl LogicalPlan {
    pub fn annotation(&self, invocation: usize) -> LlmAnnotation {
        self.annotations.get(&invocation).cloned().unwrap_or_default()
    }

    pub fn nodes(&self) -> Vec<&PlanNode> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| out.push(n));
        out
    }

    /// Numbers nodes in pre-order from 1.
    pub(crate) fn renumber(&mut self) {
        fn go(n: &mut PlanNode, next: &mut usize) {
            n.id = *next;
            *next += 1;
            for c in &mut n.children {
                go(c, next);
            }
        }
        go(&mut self.root, &mut 1);
    }

    /// Same operators and annotations, ignoring estimates and ids.
    pub fn same_shape(&self, other: &LogicalPlan) -> bool {
        fn eq(a: &PlanNode, b: &PlanNode) -> bool {
            a.op == b.op && a.children.len() == b.children.len() && a.children.iter().zip(&b.children).all(|(x, y)| eq(x, y))
        }
        self.annotations == other.annotations && eq(&self.root, &other.root)
    }
}

/// Canonical plan: scans, joins in FROM order, similarity search over all
/// rows, one filter with every conjunct in source order, then grouping and
/// aggregation or the final projection.
pub fn build_logical(query: Arc<BoundQuery>, stats: &dyn StatsSource) -> Result<LogicalPlan, PlanError> {
    let q = &*query;
    let row_count = |t: usize| stats.row_count(&q.tables[t].name).unwrap_or(0);

    let mut node = PlanNode::new(Operator::Scan { table: 0 }, vec![]);
    let mut left_rows = row_count(0);
    for (j, join) in q.joins.iter().enumerate() {
        let right_table = join.right.table;
        let right = PlanNode::new(Operator::Scan { table: right_table }, vec![]);
        let right_rows = row_count(right_table);
        // Larger input first: it is the probe side.
        let children = if right_rows > left_rows { vec![right, node] } else { vec![node, right] };
        node = PlanNode::new(Operator::HashJoin { join: j }, children);
        left_rows = left_rows.max(right_rows);
    }

    for inv in &q.invocations {
        if inv.similarity().is_some() {
            node = PlanNode::new(Operator::SimilarityTopK { invocation: inv.id, mode: SimilarityMode::CrossJoin }, vec![node]);
        }
    }

    if !q.conjuncts.is_empty() {
        node = PlanNode::new(Operator::Filter { conjuncts: (0..q.conjuncts.len()).collect() }, vec![node]);
    }

    if q.is_grouped() {
        for s in &q.select {
            match s {
                BoundSelect::Column { column, .. } if !q.group_by.contains(column) => {
                    return Err(PlanError::NotGrouped(q.qualified_name(*column)));
                }
                BoundSelect::Llm { .. } => {
                    return Err(PlanError::Unsupported("LLM projection in a grouped query".into()));
                }
                _ => {}
            }
        }
        node = PlanNode::new(Operator::HashGroupBy { keys: q.group_by.clone() }, vec![node]);
        let mapped: Vec<usize> = q
            .select
            .iter()
            .filter_map(|s| match s {
                BoundSelect::AvgLlm { invocation, .. } => Some(*invocation),
                _ => None,
            })
            .collect();
        if !mapped.is_empty() {
            node = PlanNode::new(Operator::LlmAggregateMap { invocations: mapped }, vec![node]);
        }
        node = PlanNode::new(Operator::Aggregate, vec![node]);
    } else {
        let projected: Vec<usize> = q
            .select
            .iter()
            .filter_map(|s| match s {
                BoundSelect::Llm { invocation, .. } => Some(*invocation),
                _ => None,
            })
            .collect();
        node = if projected.is_empty() {
            PlanNode::new(Operator::Output, vec![node])
        } else {
            PlanNode::new(Operator::LlmProject { invocations: projected }, vec![node])
        };
    }

    let mut plan = LogicalPlan { query, root: node, annotations: BTreeMap::new() };
    plan.renumber();
    Ok(plan)
}

/// Indented operator tree, one operator per line, with estimated rows and
/// LLM calls. Expects estimates filled in by [`annotate`].
pub fn explain(plan: &LogicalPlan) -> String {
    let mut out = String::new();
    explain_node(plan, &plan.root, 0, &mut out);
    out
}

fn explain_node(plan: &LogicalPlan, node: &PlanNode, depth: usize, out: &mut String) {
    let q = &*plan.query;
    let mut line = "  ".repeat(depth);
    let llm_detail = |invs: &[usize], line: &mut String| {
        for &i in invs {
            let a = plan.annotation(i);
            let _ = write!(line, " #{i}:{}", q.invocations[i].contract);
            if a.cacheable {
                line.push_str(" cacheable");
            }
            if let Some(c) = a.sort_by {
                let _ = write!(line, " sort_by={}", q.qualified_name(c));
            }
        }
    };
    match &node.op {
        Operator::Scan { table } => {
            let t = &q.tables[*table];
            let _ = write!(line, "Scan {}", t.name);
            if t.binding != t.name {
                let _ = write!(line, " {}", t.binding);
            }
        }
        Operator::Filter { conjuncts } => {
            let parts: Vec<String> = conjuncts.iter().map(|c| q.render_conjunct(&q.conjuncts[*c])).collect();
            let _ = write!(line, "Filter({})", parts.join(" AND "));
            let invs: Vec<usize> = conjuncts
                .iter()
                .filter_map(|c| match &q.conjuncts[*c] {
                    BoundConjunct::Llm { invocation, .. } => Some(*invocation),
                    _ => None,
                })
                .collect();
            llm_detail(&invs, &mut line);
        }
        Operator::LlmFilter { conjunct } => {
            let BoundConjunct::Llm { invocation, .. } = &q.conjuncts[*conjunct] else { unreachable!() };
            let _ = write!(line, "Filter(llm_filter) {}", q.render_conjunct(&q.conjuncts[*conjunct]));
            llm_detail(&[*invocation], &mut line);
        }
        Operator::HashJoin { join } => {
            let j = q.joins[*join];
            let _ = write!(line, "Hash Join({} = {})", q.qualified_name(j.left), q.qualified_name(j.right));
        }
        Operator::SimilarityTopK { invocation, mode } => {
            let (_, query, k, index) = q.invocations[*invocation].similarity().expect("similarity argument");
            let _ = write!(line, "SimilarityTopK(k={k}) query={} index={index}", q.qualified_name(query));
            if *mode == SimilarityMode::CrossJoin {
                line.push_str(" cross_join");
            }
        }
        Operator::HashGroupBy { keys } => {
            let keys: Vec<String> = keys.iter().map(|k| q.qualified_name(*k)).collect();
            let _ = write!(line, "Hash Group By({})", keys.join(", "));
        }
        Operator::LlmAggregateMap { invocations } => {
            line.push_str("LlmAggregateMap(llm_reduce)");
            llm_detail(invocations, &mut line);
        }
        Operator::Aggregate => {
            let items: Vec<String> = q.select.iter().map(|s| select_label(q, s)).collect();
            let _ = write!(line, "Aggregate({})", items.join(", "));
        }
        Operator::LlmProject { invocations } => {
            let items: Vec<String> = q.select.iter().map(|s| select_label(q, s)).collect();
            let _ = write!(line, "Projection(llm_complete) [{}]", items.join(", "));
            llm_detail(invocations, &mut line);
        }
        Operator::Output => {
            let items: Vec<String> = q.select.iter().map(|s| select_label(q, s)).collect();
            let _ = write!(line, "Projection [{}]", items.join(", "));
        }
    }
    let _ = writeln!(line, " rows={} llm_calls={}", fmt_est(node.est_rows), fmt_est(node.est_llm_calls));
    out.push_str(&line);
    for c in &node.children {
        explain_node(plan, c, depth + 1, out);
    }
}

fn fmt_est(v: f64) -> String {
    format!("{}", v.round() as i64)
}

fn select_label(q: &BoundQuery, s: &BoundSelect) -> String {
    match s {
        BoundSelect::Column { column, name } => {
            let qn = q.qualified_name(*column);
            if qn.ends_with(&format!(".{name}")) {
                qn
            } else {
                format!("{qn} AS {name}")
            }
        }
        BoundSelect::Literal { value, name } => format!("{} AS {name}", value.render()),
        BoundSelect::Llm { invocation, name } => format!("llm_complete#{invocation} AS {name}"),
        BoundSelect::AvgLlm { invocation, name } => format!("AVG(llm_reduce#{invocation}) AS {name}"),
        BoundSelect::AvgColumn { column, name } => format!("AVG({}) AS {name}", q.qualified_name(*column)),
    }
}

/// Columns read from an invocation's arguments, excluding similarity
/// queries.
pub(crate) fn column_args(q: &BoundQuery, invocation: usize) -> Vec<ColumnId> {
    q.invocations[invocation]
        .args
        .iter()
        .filter_map(|a| match a {
            LlmArg::Column(c) => Some(*c),
            _ => None,
        })
        .collect()
}
