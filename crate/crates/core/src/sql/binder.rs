//! Name resolution against the catalog and contract assignment.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::ast::{CmpOp, ColumnName, Expr, Literal, LlmCall, QueryAst, SelectItem};
use super::contract::{infer_contract, ContractContext, ContractDefaults, OutputContract, Template};
use crate::catalog::{Catalog, Column, Table};
use crate::value::{stable_hash_parts, DataType, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("ambiguous column `{column}`: present in {}", candidates.join(", "))]
    AmbiguousColumn { column: String, candidates: Vec<String> },
    #[error("template has {placeholders} placeholder(s) but the call passes {args} argument(s): {template:?}")]
    PlaceholderArityMismatch { template: String, placeholders: usize, args: usize },
    #[error("contract conflict: {0}")]
    ContractConflict(String),
    #[error("invalid contract: {0}")]
    InvalidContract(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no vector index for similarity search: {0}")]
    MissingIndex(String),
    #[error("table name `{0}` bound twice; use an alias")]
    DuplicateBinding(String),
    #[error("invalid join: {0}")]
    InvalidJoin(String),
}

/// A resolved column: position of the table in the FROM/JOIN list and the
/// column's position in that table's schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnId {
    pub table: usize,
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct BoundTable {
    pub name: String,
    pub binding: String,
    pub table: Arc<Table>,
}

/// Equi-join of table `right.table` against an earlier table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundJoin {
    pub left: ColumnId,
    pub right: ColumnId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Column(ColumnId),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundConjunct {
    Constant(bool),
    /// A bare boolean column.
    Truthy(ColumnId),
    Compare { op: CmpOp, left: Operand, right: Operand },
    /// `LLM(...) op literal`; `op` is `=` or `<>`.
    Llm { invocation: usize, op: CmpOp, expected: Value },
}

impl BoundConjunct {
    pub fn is_llm(&self) -> bool {
        matches!(self, BoundConjunct::Llm { .. })
    }

    /// Columns read by a relational conjunct. LLM conjuncts report nothing;
    /// their arguments live on the invocation.
    pub fn columns(&self) -> Vec<ColumnId> {
        match self {
            BoundConjunct::Constant(_) | BoundConjunct::Llm { .. } => Vec::new(),
            BoundConjunct::Truthy(c) => vec![*c],
            BoundConjunct::Compare { left, right, .. } => [left, right]
                .into_iter()
                .filter_map(|o| match o {
                    Operand::Column(c) => Some(*c),
                    Operand::Literal(_) => None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundSelect {
    Column { column: ColumnId, name: String },
    Literal { value: Value, name: String },
    Llm { invocation: usize, name: String },
    AvgLlm { invocation: usize, name: String },
    AvgColumn { column: ColumnId, name: String },
}

impl BoundSelect {
    pub fn name(&self) -> &str {
        match self {
            BoundSelect::Column { name, .. }
            | BoundSelect::Literal { name, .. }
            | BoundSelect::Llm { name, .. }
            | BoundSelect::AvgLlm { name, .. }
            | BoundSelect::AvgColumn { name, .. } => name,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self, BoundSelect::AvgLlm { .. } | BoundSelect::AvgColumn { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTarget {
    pub table: String,
    pub column: String,
}

impl fmt::Display for IndexTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LlmArg {
    Column(ColumnId),
    Literal(Value),
    /// Top-`k` texts from `index` nearest to the query column's text.
    Similarity { query: ColumnId, k: usize, index: IndexTarget },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvocationSite {
    SelectProjection,
    WherePredicate,
    AggregateInput,
    RagGeneration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmInvocation {
    pub id: usize,
    pub template: Template,
    pub args: Vec<LlmArg>,
    pub site: InvocationSite,
    pub contract: OutputContract,
}

impl LlmInvocation {
    /// Identity of the call shape used to key the dedup cache.
    pub fn fingerprint(&self) -> u64 {
        let contract = self.contract.to_string();
        stable_hash_parts(&[self.template.text().as_bytes(), contract.as_bytes()])
    }

    /// Plain column arguments, in argument order.
    pub fn arg_columns(&self) -> Vec<ColumnId> {
        self.args
            .iter()
            .filter_map(|a| match a {
                LlmArg::Column(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Every column the call reads, including similarity query columns.
    pub fn input_columns(&self) -> Vec<ColumnId> {
        self.args
            .iter()
            .filter_map(|a| match a {
                LlmArg::Column(c) => Some(*c),
                LlmArg::Similarity { query, .. } => Some(*query),
                LlmArg::Literal(_) => None,
            })
            .collect()
    }

    pub fn similarity(&self) -> Option<(usize, ColumnId, usize, &IndexTarget)> {
        self.args.iter().enumerate().find_map(|(i, a)| match a {
            LlmArg::Similarity { query, k, index } => Some((i, *query, *k, index)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BoundQuery {
    pub tables: Vec<BoundTable>,
    pub joins: Vec<BoundJoin>,
    pub conjuncts: Vec<BoundConjunct>,
    pub group_by: Vec<ColumnId>,
    pub select: Vec<BoundSelect>,
    pub invocations: Vec<LlmInvocation>,
}

impl BoundQuery {
    pub fn column(&self, id: ColumnId) -> &Column {
        &self.tables[id.table].table.schema().columns[id.column]
    }

    pub fn qualified_name(&self, id: ColumnId) -> String {
        format!("{}.{}", self.tables[id.table].binding, self.column(id).name)
    }

    /// Base-table name and column name, for statistics lookups.
    pub fn stats_key(&self, id: ColumnId) -> (&str, &str) {
        (self.tables[id.table].name.as_str(), self.column(id).name.as_str())
    }

    pub fn is_grouped(&self) -> bool {
        !self.group_by.is_empty() || self.select.iter().any(BoundSelect::is_aggregate)
    }

    pub fn output_names(&self) -> Vec<String> {
        self.select.iter().map(|s| s.name().to_string()).collect()
    }

    pub fn render_operand(&self, o: &Operand) -> String {
        match o {
            Operand::Column(c) => self.qualified_name(*c),
            Operand::Literal(v) => render_literal(v),
        }
    }

    pub fn render_conjunct(&self, c: &BoundConjunct) -> String {
        match c {
            BoundConjunct::Constant(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
            BoundConjunct::Truthy(col) => self.qualified_name(*col),
            BoundConjunct::Compare { op, left, right } => {
                format!("{} {} {}", self.render_operand(left), op.symbol(), self.render_operand(right))
            }
            BoundConjunct::Llm { invocation, op, expected } => {
                format!("llm_filter#{invocation} {} {}", op.symbol(), render_literal(expected))
            }
        }
    }
}

fn render_literal(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::Null => "NULL".into(),
        Value::Bool(true) => "TRUE".into(),
        Value::Bool(false) => "FALSE".into(),
        other => other.render(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindOptions {
    pub contracts: ContractDefaults,
    /// Index searched by `SIMILARITY_SEARCH`; when absent the catalog must
    /// hold exactly one index.
    pub rag_index: Option<IndexTarget>,
    /// `k` when the call gives none.
    pub default_k: usize,
}

impl Default for BindOptions {
    fn default() -> Self {
        BindOptions { contracts: ContractDefaults::default(), rag_index: None, default_k: 3 }
    }
}

pub fn bind(ast: &QueryAst, catalog: &Catalog, options: &BindOptions) -> Result<BoundQuery, BindError> {
    let mut b = Binder { catalog, options, tables: Vec::new(), invocations: Vec::new() };
    b.add_table(&ast.from.name, ast.from.binding_name())?;
    let mut joins = Vec::new();
    for j in &ast.joins {
        b.add_table(&j.table.name, j.table.binding_name())?;
        let new = b.tables.len() - 1;
        let l = b.resolve(&j.left)?;
        let r = b.resolve(&j.right)?;
        let (left, right) = match (l.table == new, r.table == new) {
            (false, true) => (l, r),
            (true, false) => (r, l),
            _ => {
                return Err(BindError::InvalidJoin(format!(
                    "`{} = {}` must compare the joined table with an earlier one",
                    j.left, j.right
                )))
            }
        };
        let (lt, rt) = (b.column_type(left), b.column_type(right));
        if !comparable(Some(lt), Some(rt)) {
            return Err(BindError::TypeMismatch(format!("join keys `{}` ({lt}) and `{}` ({rt})", j.left, j.right)));
        }
        joins.push(BoundJoin { left, right });
    }

    let mut conjuncts = Vec::new();
    for c in &ast.where_conjuncts {
        conjuncts.push(b.conjunct(c)?);
    }

    let group_by = ast.group_by.iter().map(|c| b.resolve(c)).collect::<Result<Vec<_>, _>>()?;

    let mut select = Vec::new();
    for (pos, item) in ast.select.iter().enumerate() {
        match item {
            SelectItem::Wildcard => {
                for (t, bt) in b.tables.iter().enumerate() {
                    for (c, col) in bt.table.schema().columns.iter().enumerate() {
                        select.push(BoundSelect::Column { column: ColumnId { table: t, column: c }, name: col.name.clone() });
                    }
                }
            }
            SelectItem::Expr { expr, alias } => select.push(b.select_item(expr, alias.as_deref(), pos + 1)?),
        }
    }

    Ok(BoundQuery { tables: b.tables, joins, conjuncts, group_by, select, invocations: b.invocations })
}

struct Binder<'a> {
    catalog: &'a Catalog,
    options: &'a BindOptions,
    tables: Vec<BoundTable>,
    invocations: Vec<LlmInvocation>,
}

fn comparable(a: Option<DataType>, b: Option<DataType>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a == b || (a.is_numeric() && b.is_numeric()),
        _ => true,
    }
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Str(s) => Value::text(s),
        Literal::Int(i) => Value::Int(*i),
        Literal::Float(f) => Value::Float(*f),
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Null => Value::Null,
    }
}

impl Binder<'_> {
    fn add_table(&mut self, name: &str, binding: &str) -> Result<(), BindError> {
        if self.tables.iter().any(|t| t.binding == binding) {
            return Err(BindError::DuplicateBinding(binding.to_string()));
        }
        let table = self.catalog.get_table(name).map_err(|_| BindError::UnknownTable(name.to_string()))?;
        self.tables.push(BoundTable { name: name.to_string(), binding: binding.to_string(), table });
        Ok(())
    }

    fn column_type(&self, id: ColumnId) -> DataType {
        self.tables[id.table].table.schema().columns[id.column].ty
    }

    fn resolve(&self, c: &ColumnName) -> Result<ColumnId, BindError> {
        match &c.qualifier {
            Some(q) => {
                let t = self
                    .tables
                    .iter()
                    .position(|t| t.binding == *q)
                    .ok_or_else(|| BindError::UnknownTable(q.clone()))?;
                let col = self.tables[t].table.schema().index_of(&c.name).ok_or_else(|| BindError::UnknownColumn(c.to_string()))?;
                Ok(ColumnId { table: t, column: col })
            }
            None => {
                let hits: Vec<ColumnId> = self
                    .tables
                    .iter()
                    .enumerate()
                    .filter_map(|(t, bt)| bt.table.schema().index_of(&c.name).map(|col| ColumnId { table: t, column: col }))
                    .collect();
                match hits.as_slice() {
                    [] => Err(BindError::UnknownColumn(c.name.clone())),
                    [one] => Ok(*one),
                    many => Err(BindError::AmbiguousColumn {
                        column: c.name.clone(),
                        candidates: many.iter().map(|h| self.tables[h.table].binding.clone()).collect(),
                    }),
                }
            }
        }
    }

    fn operand(&self, e: &Expr) -> Result<Operand, BindError> {
        match e {
            Expr::Column(c) => Ok(Operand::Column(self.resolve(c)?)),
            Expr::Literal(l) => Ok(Operand::Literal(literal_value(l))),
            other => Err(BindError::Unsupported(format!("`{other}` is not allowed here"))),
        }
    }

    fn operand_type(&self, o: &Operand) -> Option<DataType> {
        match o {
            Operand::Column(c) => Some(self.column_type(*c)),
            Operand::Literal(v) => v.data_type(),
        }
    }

    fn conjunct(&mut self, e: &Expr) -> Result<BoundConjunct, BindError> {
        match e {
            Expr::Literal(Literal::Bool(b)) => Ok(BoundConjunct::Constant(*b)),
            Expr::Literal(Literal::Null) => Ok(BoundConjunct::Constant(false)),
            Expr::Column(c) => {
                let id = self.resolve(c)?;
                if self.column_type(id) != DataType::Bool {
                    return Err(BindError::TypeMismatch(format!("`{c}` is not boolean")));
                }
                Ok(BoundConjunct::Truthy(id))
            }
            Expr::Compare { op, left, right } => match (left.as_ref(), right.as_ref()) {
                (Expr::Llm(call), Expr::Literal(lit)) | (Expr::Literal(lit), Expr::Llm(call)) => {
                    self.llm_predicate(call, *op, lit)
                }
                (l, r) => {
                    let left = self.operand(l)?;
                    let right = self.operand(r)?;
                    let (lt, rt) = (self.operand_type(&left), self.operand_type(&right));
                    if !comparable(lt, rt) {
                        return Err(BindError::TypeMismatch(format!("cannot compare `{l}` with `{r}`")));
                    }
                    Ok(BoundConjunct::Compare { op: *op, left, right })
                }
            },
            Expr::Llm(_) => Err(BindError::Unsupported("an LLM predicate must be compared to a literal".into())),
            other => Err(BindError::Unsupported(format!("`{other}` is not a valid predicate"))),
        }
    }

    fn llm_predicate(&mut self, call: &LlmCall, op: CmpOp, lit: &Literal) -> Result<BoundConjunct, BindError> {
        if !matches!(op, CmpOp::Eq | CmpOp::NotEq) {
            return Err(BindError::Unsupported(format!("LLM predicates support = and <>, not {}", op.symbol())));
        }
        let id = self.invocation(call, InvocationSite::WherePredicate, &ContractContext::EqualityWith(lit.clone()))?;
        let expected = match (&self.invocations[id].contract, lit) {
            (OutputContract::IntRange { .. }, Literal::Int(v)) => Value::Int(*v),
            (_, Literal::Str(s)) => Value::text(s),
            (c, l) => return Err(BindError::ContractConflict(format!("cannot compare a {c} result to {l}"))),
        };
        Ok(BoundConjunct::Llm { invocation: id, op, expected })
    }

    fn select_item(&mut self, e: &Expr, alias: Option<&str>, pos: usize) -> Result<BoundSelect, BindError> {
        let named = |default: String| alias.map(str::to_string).unwrap_or(default);
        match e {
            Expr::Column(c) => {
                let column = self.resolve(c)?;
                Ok(BoundSelect::Column { column, name: named(c.name.clone()) })
            }
            Expr::Literal(l) => Ok(BoundSelect::Literal { value: literal_value(l), name: named(format!("col_{pos}")) }),
            Expr::Llm(call) => {
                let rag = call.args.iter().any(|a| matches!(a, Expr::SimilaritySearch { .. }));
                let (site, ctx) = if rag {
                    (InvocationSite::RagGeneration, ContractContext::RagGeneration)
                } else {
                    (InvocationSite::SelectProjection, ContractContext::Projection)
                };
                let invocation = self.invocation(call, site, &ctx)?;
                Ok(BoundSelect::Llm { invocation, name: named(format!("llm_{pos}")) })
            }
            Expr::Avg(inner) => match inner.as_ref() {
                Expr::Llm(call) => {
                    if call.args.iter().any(|a| matches!(a, Expr::SimilaritySearch { .. })) {
                        return Err(BindError::Unsupported("similarity search inside AVG".into()));
                    }
                    let invocation = self.invocation(call, InvocationSite::AggregateInput, &ContractContext::AvgInput)?;
                    Ok(BoundSelect::AvgLlm { invocation, name: named(format!("avg_{pos}")) })
                }
                Expr::Column(c) => {
                    let column = self.resolve(c)?;
                    if !self.column_type(column).is_numeric() {
                        return Err(BindError::TypeMismatch(format!("AVG over non-numeric column `{c}`")));
                    }
                    Ok(BoundSelect::AvgColumn { column, name: named(format!("avg_{pos}")) })
                }
                other => Err(BindError::Unsupported(format!("AVG({other})"))),
            },
            other => Err(BindError::Unsupported(format!("`{other}` in the select list"))),
        }
    }

    fn invocation(&mut self, call: &LlmCall, site: InvocationSite, ctx: &ContractContext) -> Result<usize, BindError> {
        let template = Template::parse(&call.template);
        let placeholders = template.placeholders().len();
        if call.args.len() < placeholders {
            return Err(BindError::PlaceholderArityMismatch {
                template: call.template.clone(),
                placeholders,
                args: call.args.len(),
            });
        }
        let mut args = Vec::with_capacity(call.args.len());
        for a in &call.args {
            args.push(match a {
                Expr::Column(c) => LlmArg::Column(self.resolve(c)?),
                Expr::Literal(l) => LlmArg::Literal(literal_value(l)),
                Expr::SimilaritySearch { query, k } => {
                    let Expr::Column(qc) = query.as_ref() else {
                        return Err(BindError::Unsupported("similarity search over a non-column expression".into()));
                    };
                    let query = self.resolve(qc)?;
                    if self.column_type(query) != DataType::Text {
                        return Err(BindError::TypeMismatch(format!("similarity query `{qc}` is not text")));
                    }
                    let k = k.map_or(self.options.default_k, |k| k as usize);
                    LlmArg::Similarity { query, k, index: self.index_target()? }
                }
                Expr::Llm(_) => return Err(BindError::Unsupported("nested LLM calls".into())),
                other => return Err(BindError::Unsupported(format!("`{other}` as an LLM argument"))),
            });
        }
        let contract = infer_contract(call.returning.as_ref(), ctx, &self.options.contracts)?;
        let id = self.invocations.len();
        self.invocations.push(LlmInvocation { id, template, args, site, contract });
        Ok(id)
    }

    fn index_target(&self) -> Result<IndexTarget, BindError> {
        let target = match &self.options.rag_index {
            Some(t) => t.clone(),
            None => {
                let targets: BTreeSet<(String, String)> = self.catalog.index_targets().into_iter().collect();
                match targets.len() {
                    1 => {
                        let (table, column) = targets.into_iter().next().unwrap();
                        IndexTarget { table, column }
                    }
                    0 => return Err(BindError::MissingIndex("the catalog has no vector index".into())),
                    n => {
                        return Err(BindError::MissingIndex(format!(
                            "{n} indexes exist; set vector.rag_index to choose one"
                        )))
                    }
                }
            }
        };
        if self.catalog.index(&target.table, &target.column).is_none() {
            return Err(BindError::MissingIndex(format!("no index on {target}")));
        }
        Ok(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Schema;
    use crate::sql::parse;
    use crate::vector::{mock_embedding, Embedding, IndexStrategy, VectorIndex};

    fn catalog() -> Catalog {
        let cat = Catalog::new();
        let movies = Table::new(
            "movies",
            Schema::new(vec![
                Column::new("rotten_tomatoes_link", DataType::Text),
                Column::new("movie_title", DataType::Text),
                Column::new("movie_info", DataType::Text),
            ]),
            vec![vec![Value::text("m/1"), Value::text("Up"), Value::text("balloons")]],
        )
        .unwrap();
        let reviews = Table::new(
            "reviews",
            Schema::new(vec![
                Column::new("rotten_tomatoes_link", DataType::Text),
                Column::new("review_type", DataType::Text),
                Column::new("review_content", DataType::Text),
            ]),
            vec![vec![Value::text("m/1"), Value::text("Fresh"), Value::text("lovely")]],
        )
        .unwrap();
        let squad = Table::new(
            "squad",
            Schema::new(vec![
                Column::new("question", DataType::Text),
                Column::new("context", DataType::Text),
                Column::new("is_impossible", DataType::Bool),
            ]),
            vec![vec![Value::text("q"), Value::text("c"), Value::Bool(false)]],
        )
        .unwrap();
        cat.register(movies);
        cat.register(reviews);
        cat.register(squad);
        let idx = VectorIndex::build(
            vec![(0, Embedding::new(mock_embedding("c", 8, 1)).unwrap())],
            IndexStrategy::ExactScan,
            1,
        )
        .unwrap();
        cat.register_index("squad", "context", idx);
        cat
    }

    fn bind_sql(sql: &str) -> Result<BoundQuery, BindError> {
        bind(&parse(sql).unwrap(), &catalog(), &BindOptions::default())
    }

    #[test]
    fn projection_query_binds_args() {
        let q = bind_sql(
            "SELECT LLM(\"Recommend movies for the user based on {movie information} and {user review}\", \
             m.movie_info, r.review_content) FROM reviews r JOIN movies m ON r.rotten_tomatoes_link == m.rotten_tomatoes_link",
        )
        .unwrap();
        let inv = &q.invocations[0];
        let names: Vec<String> = inv.arg_columns().into_iter().map(|c| q.qualified_name(c)).collect();
        assert_eq!(names, ["m.movie_info", "r.review_content"]);
        assert_eq!(inv.site, InvocationSite::SelectProjection);
        assert_eq!(inv.contract, OutputContract::FreeText);
        assert_eq!(q.joins.len(), 1);
    }

    #[test]
    fn arity_mismatch() {
        assert!(matches!(
            bind_sql("SELECT LLM('{a} {b}', movie_info) FROM movies"),
            Err(BindError::PlaceholderArityMismatch { placeholders: 2, args: 1, .. })
        ));
    }

    #[test]
    fn unique_unqualified_name_resolves() {
        let q = bind_sql(
            "SELECT review_content FROM reviews r JOIN movies m ON r.rotten_tomatoes_link = m.rotten_tomatoes_link",
        )
        .unwrap();
        assert!(matches!(q.select[0], BoundSelect::Column { column: ColumnId { table: 0, column: 2 }, .. }));
    }

    #[test]
    fn ambiguous_and_unknown_names() {
        assert!(matches!(
            bind_sql("SELECT rotten_tomatoes_link FROM reviews r JOIN movies m ON r.rotten_tomatoes_link = m.rotten_tomatoes_link"),
            Err(BindError::AmbiguousColumn { .. })
        ));
        assert!(matches!(bind_sql("SELECT x FROM movies"), Err(BindError::UnknownColumn(_))));
        assert!(matches!(bind_sql("SELECT x FROM nonexistent"), Err(BindError::UnknownTable(_))));
        assert!(matches!(bind_sql("SELECT * FROM `Movies`"), Err(BindError::UnknownTable(_))));
    }

    #[test]
    fn predicate_contracts() {
        let q = bind_sql(
            "SELECT m.movie_title FROM Movies m JOIN Reviews r ON r.rotten_tomatoes_link = m.rotten_tomatoes_link \
             WHERE LLM(\"Analyze {a} {b}\", m.movie_info, r.review_content) == \"Yes\" AND r.review_type == \"Fresh\"",
        )
        .unwrap();
        assert_eq!(q.invocations[0].site, InvocationSite::WherePredicate);
        assert_eq!(q.invocations[0].contract, OutputContract::Choice { options: vec!["Yes".into(), "No".into()] });
        assert!(q.conjuncts[0].is_llm());
        assert!(!q.conjuncts[1].is_llm());
    }

    #[test]
    fn aggregate_contract() {
        let q = bind_sql(
            "SELECT AVG(LLM('Rate {review} and {info}: ', r.review_content, m.movie_info)) AS AverageScore \
             FROM reviews r JOIN movies m ON r.rotten_tomatoes_link = m.rotten_tomatoes_link GROUP BY m.movie_title",
        )
        .unwrap();
        assert_eq!(q.invocations[0].contract, OutputContract::IntRange { lo: 0, hi: 5 });
        assert_eq!(q.select[0].name(), "averagescore");
        assert!(q.is_grouped());
    }

    #[test]
    fn rag_call_binds_index() {
        let q = bind_sql(
            "SELECT LLM(\"Given the following {context}, answer this question\", \
             VectorDB.similarity_search(s.question), s.question) FROM squad s WHERE s.is_impossible == False",
        )
        .unwrap();
        let inv = &q.invocations[0];
        assert_eq!(inv.site, InvocationSite::RagGeneration);
        let (pos, _, k, target) = inv.similarity().unwrap();
        assert_eq!((pos, k), (0, 3));
        assert_eq!(target.to_string(), "squad.context");
    }

    #[test]
    fn rag_without_index_fails_at_bind() {
        let cat = Catalog::new();
        cat.register(Table::new("s", Schema::new(vec![Column::new("q", DataType::Text)]), vec![]).unwrap());
        let ast = parse("SELECT LLM('{c}', SIMILARITY_SEARCH(q)) FROM s").unwrap();
        assert!(matches!(bind(&ast, &cat, &BindOptions::default()), Err(BindError::MissingIndex(_))));
    }

    #[test]
    fn type_errors() {
        assert!(matches!(bind_sql("SELECT * FROM squad WHERE question = 3"), Err(BindError::TypeMismatch(_))));
        assert!(matches!(bind_sql("SELECT * FROM squad WHERE question"), Err(BindError::TypeMismatch(_))));
        assert!(matches!(
            bind_sql("SELECT AVG(LLM('{q}', question) RETURNING TEXT) FROM squad"),
            Err(BindError::ContractConflict(_))
        ));
    }
}
