//! Rewrite rules, applied in a fixed order to a fixpoint. A rewrite is
//! kept only if it does not raise the estimated cost.

use std::collections::BTreeSet;

use serde::Serialize;

use super::cost::{annotate_sites, conjunct_selectivity, lowest_distinct_column};
use super::{annotate, column_args, estimate_cost, CostEstimate, LogicalPlan, Operator, PlanNode, PlannerConfig, SimilarityMode, StatsSource};
use crate::sql::BoundConjunct;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// Move single-side relational conjuncts below joins and similarity
    /// search.
    PredicatePushdown,
    /// Relational conjuncts before LLM conjuncts; cheap ones by ascending
    /// selectivity.
    ConjunctOrdering,
    /// Replace the pairwise similarity join with per-row index probes.
    TopKPushdown,
    /// Mark call sites whose argument tuples repeat.
    DedupAnnotation,
    /// Sort call-site inputs by the lowest-cardinality argument.
    PrefixShareOrder,
}

pub const RULE_ORDER: [Rule; 5] =
    [Rule::PredicatePushdown, Rule::ConjunctOrdering, Rule::TopKPushdown, Rule::DedupAnnotation, Rule::PrefixShareOrder];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleStep {
    pub rule: Rule,
    pub accepted: bool,
    pub cost_before: f64,
    pub cost_after: f64,
}

const MAX_ROUNDS: usize = 16;

pub fn optimize(plan: &LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> LogicalPlan {
    optimize_with_trace(plan, stats, cfg).0
}

/// Optimizes and reports every attempted rewrite with the cost on either
/// side of it.
pub fn optimize_with_trace(
    plan: &LogicalPlan,
    stats: &dyn StatsSource,
    cfg: &PlannerConfig,
) -> (LogicalPlan, Vec<RuleStep>) {
    let mut current = plan.clone();
    let mut cost = annotate(&mut current, stats, cfg);
    let mut trace = Vec::new();
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for rule in RULE_ORDER {
            let Some(mut candidate) = apply(rule, &current, stats, cfg) else { continue };
            candidate.renumber();
            let new_cost: CostEstimate = annotate(&mut candidate, stats, cfg);
            let accepted = new_cost.total <= cost.total + 1e-9;
            trace.push(RuleStep { rule, accepted, cost_before: cost.total, cost_after: new_cost.total });
            if accepted {
                current = candidate;
                cost = new_cost;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (current, trace)
}

fn apply(rule: Rule, plan: &LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> Option<LogicalPlan> {
    match rule {
        Rule::PredicatePushdown => pushdown(plan),
        Rule::ConjunctOrdering => order_conjuncts(plan, stats),
        Rule::TopKPushdown => topk_pushdown(plan),
        Rule::DedupAnnotation => dedup_annotation(plan, stats, cfg),
        Rule::PrefixShareOrder => prefix_share(plan, stats, cfg),
    }
}

fn conjunct_tables(plan: &LogicalPlan, c: usize) -> BTreeSet<usize> {
    plan.query.conjuncts[c].columns().iter().map(|c| c.table).collect()
}

fn is_pushable(plan: &LogicalPlan, c: usize) -> bool {
    let conj = &plan.query.conjuncts[c];
    !conj.is_llm() && !conj.columns().is_empty()
}

/// Whether `node` has a spot strictly below it where a conjunct over
/// `tables` can be evaluated.
fn can_sink(node: &PlanNode, tables: &BTreeSet<usize>) -> bool {
    match &node.op {
        Operator::HashJoin { .. } => node.children.iter().any(|c| tables.is_subset(&c.tables())),
        Operator::SimilarityTopK { .. } => true,
        Operator::Filter { .. } => matches!(node.child().op, Operator::Scan { .. }) || can_sink(node.child(), tables),
        _ => false,
    }
}

/// Places conjunct `c` as deep under `node` as it can go.
fn sink(mut node: PlanNode, c: usize, tables: &BTreeSet<usize>) -> PlanNode {
    match &mut node.op {
        Operator::HashJoin { .. } => {
            if let Some(i) = node.children.iter().position(|ch| tables.is_subset(&ch.tables())) {
                let child = node.children.remove(i);
                node.children.insert(i, sink(child, c, tables));
                node
            } else {
                PlanNode::new(Operator::Filter { conjuncts: vec![c] }, vec![node])
            }
        }
        Operator::SimilarityTopK { .. } => {
            let child = node.children.remove(0);
            node.children.push(sink(child, c, tables));
            node
        }
        Operator::Filter { conjuncts } if matches!(node.children[0].op, Operator::Scan { .. }) => {
            conjuncts.push(c);
            node
        }
        Operator::Filter { .. } if can_sink(&node.children[0], tables) => {
            let child = node.children.remove(0);
            node.children.push(sink(child, c, tables));
            node
        }
        _ => PlanNode::new(Operator::Filter { conjuncts: vec![c] }, vec![node]),
    }
}

fn pushdown(plan: &LogicalPlan) -> Option<LogicalPlan> {
    fn go(plan: &LogicalPlan, mut node: PlanNode, moved: &mut bool) -> PlanNode {
        node.children = std::mem::take(&mut node.children).into_iter().map(|c| go(plan, c, moved)).collect();
        let Operator::Filter { conjuncts } = &node.op else { return node };
        if matches!(node.children[0].op, Operator::Scan { .. }) {
            return node;
        }
        let mut keep = Vec::new();
        let mut child = node.children.remove(0);
        for &c in conjuncts {
            let tables = conjunct_tables(plan, c);
            if is_pushable(plan, c) && can_sink(&child, &tables) {
                child = sink(child, c, &tables);
                *moved = true;
            } else {
                keep.push(c);
            }
        }
        if keep.is_empty() {
            child
        } else {
            node.op = Operator::Filter { conjuncts: keep };
            node.children.push(child);
            node
        }
    }
    let mut moved = false;
    let root = go(plan, plan.root.clone(), &mut moved);
    moved.then(|| LogicalPlan { root, ..plan.clone() })
}

fn order_conjuncts(plan: &LogicalPlan, stats: &dyn StatsSource) -> Option<LogicalPlan> {
    fn go(plan: &LogicalPlan, stats: &dyn StatsSource, mut node: PlanNode, changed: &mut bool) -> PlanNode {
        node.children = std::mem::take(&mut node.children).into_iter().map(|c| go(plan, stats, c, changed)).collect();
        let Operator::Filter { conjuncts } = &node.op else { return node };
        let q = &plan.query;
        let (llm, mut cheap): (Vec<usize>, Vec<usize>) = conjuncts.iter().partition(|c| q.conjuncts[**c].is_llm());
        // Stable sort keeps source order among equal estimates.
        cheap.sort_by(|a, b| {
            let sa = conjunct_selectivity(q, stats, &q.conjuncts[*a]);
            let sb = conjunct_selectivity(q, stats, &q.conjuncts[*b]);
            sa.total_cmp(&sb)
        });
        if llm.is_empty() && &cheap == conjuncts {
            return node;
        }
        *changed = true;
        let mut out = node.children.remove(0);
        if !cheap.is_empty() {
            out = PlanNode::new(Operator::Filter { conjuncts: cheap }, vec![out]);
        }
        for c in llm {
            out = PlanNode::new(Operator::LlmFilter { conjunct: c }, vec![out]);
        }
        out
    }
    let mut changed = false;
    let root = go(plan, stats, plan.root.clone(), &mut changed);
    changed.then(|| LogicalPlan { root, ..plan.clone() })
}

fn topk_pushdown(plan: &LogicalPlan) -> Option<LogicalPlan> {
    fn go(node: &mut PlanNode, changed: &mut bool) {
        if let Operator::SimilarityTopK { mode, .. } = &mut node.op {
            if *mode == SimilarityMode::CrossJoin {
                *mode = SimilarityMode::Probe;
                *changed = true;
            }
        }
        for c in &mut node.children {
            go(c, changed);
        }
    }
    let mut out = plan.clone();
    let mut changed = false;
    go(&mut out.root, &mut changed);
    changed.then_some(out)
}

fn dedup_annotation(plan: &LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> Option<LogicalPlan> {
    let mut probe = plan.clone();
    let (_, sites) = annotate_sites(&mut probe, stats, cfg);
    let mut out = plan.clone();
    let mut changed = false;
    for (inv, site) in sites {
        let ann = out.annotations.entry(inv).or_default();
        if !ann.cacheable && site.distinct_args < site.input_rows {
            ann.cacheable = true;
            changed = true;
        }
    }
    changed.then_some(out)
}

/// Annotates each call site whose estimated cost drops when its input is
/// sorted by the lowest-cardinality argument column.
fn prefix_share(plan: &LogicalPlan, stats: &dyn StatsSource, cfg: &PlannerConfig) -> Option<LogicalPlan> {
    let mut out = plan.clone();
    let mut cost = estimate_cost(&out, stats, cfg).total;
    let mut changed = false;
    for inv in llm_sites(plan) {
        if out.annotation(inv).sort_by.is_some() {
            continue;
        }
        let Some(col) = lowest_distinct_column(&plan.query, stats, &column_args(&plan.query, inv)) else { continue };
        let mut candidate = out.clone();
        candidate.annotations.entry(inv).or_default().sort_by = Some(col);
        let c = estimate_cost(&candidate, stats, cfg).total;
        if c < cost {
            out = candidate;
            cost = c;
            changed = true;
        }
    }
    changed.then_some(out)
}

/// Invocations evaluated per row by some plan operator, in pre-order.
pub(crate) fn llm_sites(plan: &LogicalPlan) -> Vec<usize> {
    let q = &plan.query;
    let mut sites = Vec::new();
    plan.root.walk(&mut |n| match &n.op {
        Operator::LlmProject { invocations } | Operator::LlmAggregateMap { invocations } => {
            sites.extend(invocations.iter().copied())
        }
        Operator::LlmFilter { conjunct } => {
            if let BoundConjunct::Llm { invocation, .. } = q.conjuncts[*conjunct] {
                sites.push(invocation);
            }
        }
        Operator::Filter { conjuncts } => {
            for c in conjuncts {
                if let BoundConjunct::Llm { invocation, .. } = q.conjuncts[*c] {
                    sites.push(invocation);
                }
            }
        }
        _ => {}
    });
    sites
}
