//! Syntax tree for the supported SQL subset. `Display` prints canonical SQL
//! that parses back to an identical tree.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub select: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<JoinClause>,
    pub where_conjuncts: Vec<Expr>,
    pub group_by: Vec<ColumnName>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// Name other clauses use to qualify this table's columns.
    pub fn binding_name(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

/// `JOIN <table> ON <left> = <right>`, inner equi-join only.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinClause {
    pub table: TableRef,
    pub left: ColumnName,
    pub right: ColumnName,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnName {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnName {
    pub fn new(qualifier: Option<&str>, name: &str) -> ColumnName {
        ColumnName { qualifier: qualifier.map(str::to_string), name: name.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "<>",
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtEq => ">=",
        }
    }

    /// The operator with its operands swapped: `a < b` iff `b > a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::LtEq => CmpOp::GtEq,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::GtEq => CmpOp::LtEq,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    Text,
    Int,
    Float,
    Bool,
}

impl FieldType {
    pub fn keyword(self) -> &'static str {
        match self {
            FieldType::Text => "TEXT",
            FieldType::Int => "INT",
            FieldType::Float => "FLOAT",
            FieldType::Bool => "BOOL",
        }
    }
}

/// Explicit output type written after an LLM call.
#[derive(Debug, Clone, PartialEq)]
pub enum ReturningClause {
    Text,
    IntBetween(i64, i64),
    Choice(Vec<String>),
    Record(Vec<(String, FieldType)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmCall {
    pub template: String,
    pub args: Vec<Expr>,
    pub returning: Option<ReturningClause>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnName),
    Literal(Literal),
    Compare { op: CmpOp, left: Box<Expr>, right: Box<Expr> },
    Llm(LlmCall),
    Avg(Box<Expr>),
    SimilaritySearch { query: Box<Expr>, k: Option<u64> },
}

const KEYWORDS: &[&str] = &[
    "select", "from", "join", "inner", "on", "where", "and", "group", "by", "as", "avg", "llm",
    "similarity_search", "returning", "int", "between", "text", "choice", "record", "true", "false",
    "null", "float", "bool", "or", "not", "left", "right", "full", "outer", "cross", "order", "limit",
    "having", "union", "in", "exists", "with", "case", "distinct", "count", "sum", "min", "max",
];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub(crate) struct Ident<'a>(pub &'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        let plain = !s.is_empty()
            && s.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
            && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            && !is_keyword(s);
        if plain {
            f.write_str(s)
        } else {
            write!(f, "`{}`", s.replace('`', "``"))
        }
    }
}

pub(crate) struct Quoted<'a>(pub &'a str);

impl fmt::Display for Quoted<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.0.replace('"', "\"\""))
    }
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write!(f, "{}.", Ident(q))?;
        }
        write!(f, "{}", Ident(&self.name))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "{}", Quoted(s)),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x:?}"),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
            Literal::Null => f.write_str("NULL"),
        }
    }
}

impl fmt::Display for ReturningClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReturningClause::Text => f.write_str("RETURNING TEXT"),
            ReturningClause::IntBetween(lo, hi) => write!(f, "RETURNING INT BETWEEN {lo} AND {hi}"),
            ReturningClause::Choice(items) => {
                f.write_str("RETURNING CHOICE(")?;
                for (i, s) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", Quoted(s))?;
                }
                f.write_str(")")
            }
            ReturningClause::Record(fields) => {
                f.write_str("RETURNING RECORD(")?;
                for (i, (name, ty)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{} {}", Ident(name), ty.keyword())?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Compare { op, left, right } => write!(f, "{left} {} {right}", op.symbol()),
            Expr::Llm(call) => {
                write!(f, "LLM({}", Quoted(&call.template))?;
                for a in &call.args {
                    write!(f, ", {a}")?;
                }
                f.write_str(")")?;
                if let Some(r) = &call.returning {
                    write!(f, " {r}")?;
                }
                Ok(())
            }
            Expr::Avg(inner) => write!(f, "AVG({inner})"),
            Expr::SimilaritySearch { query, k } => match k {
                Some(k) => write!(f, "SIMILARITY_SEARCH({query}, {k})"),
                None => write!(f, "SIMILARITY_SEARCH({query})"),
            },
        }
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Ident(&self.name))?;
        if let Some(a) = &self.alias {
            write!(f, " {}", Ident(a))?;
        }
        Ok(())
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, item) in self.select.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                SelectItem::Wildcard => f.write_str("*")?,
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        write!(f, " AS {}", Ident(a))?;
                    }
                }
            }
        }
        write!(f, "\nFROM {}", self.from)?;
        for j in &self.joins {
            write!(f, "\nJOIN {} ON {} = {}", j.table, j.left, j.right)?;
        }
        for (i, c) in self.where_conjuncts.iter().enumerate() {
            f.write_str(if i == 0 { "\nWHERE " } else { "\n  AND " })?;
            write!(f, "{c}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str("\nGROUP BY ")?;
            for (i, c) in self.group_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}
