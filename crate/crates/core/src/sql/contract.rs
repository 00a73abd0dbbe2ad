//! Output contracts: the machine-checkable set of strings an LLM call may
//! return, and their inference from the call's syntactic context.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{FieldType, Literal, ReturningClause};
use super::BindError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub ty: SchemaFieldType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaFieldType {
    Text,
    Int,
    Float,
    Bool,
}

impl From<FieldType> for SchemaFieldType {
    fn from(t: FieldType) -> Self {
        match t {
            FieldType::Text => SchemaFieldType::Text,
            FieldType::Int => SchemaFieldType::Int,
            FieldType::Float => SchemaFieldType::Float,
            FieldType::Bool => SchemaFieldType::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputContract {
    FreeText,
    /// Nonempty, duplicate-free, in declaration order.
    Choice { options: Vec<String> },
    /// Inclusive bounds, `lo <= hi`.
    IntRange { lo: i64, hi: i64 },
    /// Field names unique.
    SchemaText { fields: Vec<SchemaField> },
}

impl OutputContract {
    pub fn choice<I, S>(options: I) -> Result<OutputContract, BindError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for o in options {
            let o = o.into();
            // Validation trims model output, so such an option could never match.
            if o.trim().is_empty() || o.trim() != o {
                return Err(BindError::InvalidContract(format!("choice option {o:?} is blank or padded with whitespace")));
            }
            if seen.insert(o.clone()) {
                out.push(o);
            }
        }
        if out.is_empty() {
            return Err(BindError::InvalidContract("choice set must be nonempty".into()));
        }
        Ok(OutputContract::Choice { options: out })
    }

    pub fn int_range(lo: i64, hi: i64) -> Result<OutputContract, BindError> {
        if lo > hi {
            return Err(BindError::InvalidContract(format!("empty integer range {lo}..={hi}")));
        }
        Ok(OutputContract::IntRange { lo, hi })
    }

    pub fn schema(fields: Vec<SchemaField>) -> Result<OutputContract, BindError> {
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(BindError::InvalidContract(format!("duplicate field `{}`", f.name)));
            }
        }
        if fields.is_empty() {
            return Err(BindError::InvalidContract("record needs at least one field".into()));
        }
        Ok(OutputContract::SchemaText { fields })
    }

    pub fn from_clause(clause: &ReturningClause) -> Result<OutputContract, BindError> {
        match clause {
            ReturningClause::Text => Ok(OutputContract::FreeText),
            ReturningClause::IntBetween(lo, hi) => OutputContract::int_range(*lo, *hi),
            ReturningClause::Choice(items) => {
                if items.iter().collect::<HashSet<_>>().len() != items.len() {
                    return Err(BindError::InvalidContract("duplicate choice option".into()));
                }
                OutputContract::choice(items.iter().cloned())
            }
            ReturningClause::Record(fields) => OutputContract::schema(
                fields
                    .iter()
                    .map(|(n, t)| SchemaField { name: n.clone(), ty: (*t).into() })
                    .collect(),
            ),
        }
    }

    /// Whether requests under this contract need constrained decoding.
    pub fn is_constrained(&self) -> bool {
        !matches!(self, OutputContract::FreeText)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OutputContract::FreeText => "text",
            OutputContract::Choice { .. } => "choice",
            OutputContract::IntRange { .. } => "int",
            OutputContract::SchemaText { .. } => "record",
        }
    }
}

impl fmt::Display for OutputContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputContract::FreeText => f.write_str("text"),
            OutputContract::Choice { options } => write!(f, "choice{{{}}}", options.join("|")),
            OutputContract::IntRange { lo, hi } => write!(f, "int[{lo},{hi}]"),
            OutputContract::SchemaText { fields } => {
                f.write_str("record{")?;
                for (i, fl) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}:{:?}", fl.name, fl.ty)?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Defaults applied when a call has no `RETURNING` clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractDefaults {
    /// Second option when an LLM call is compared to a literal other than "Yes".
    pub predicate_complement: String,
    /// Score range for LLM calls inside `AVG`.
    pub aggregate_range: (i64, i64),
}

impl Default for ContractDefaults {
    fn default() -> Self {
        ContractDefaults { predicate_complement: "Other".into(), aggregate_range: (0, 5) }
    }
}

/// Syntactic position of an LLM call, as seen by contract inference.
#[derive(Debug, Clone, PartialEq)]
pub enum ContractContext {
    Projection,
    RagGeneration,
    /// `LLM(...) = <literal>` in WHERE.
    EqualityWith(Literal),
    AvgInput,
}

/// Derives the output contract of an LLM call from where it appears.
///
/// * equality with `"Yes"` → `Choice{Yes, No}`; with another literal `L` →
///   `Choice{L, complement}`
/// * inside `AVG` → `IntRange` over the configured score range
/// * projection and RAG generation → free text
///
/// An explicit `RETURNING` clause overrides the default unless it
/// contradicts the context.
pub fn infer_contract(
    returning: Option<&ReturningClause>,
    context: &ContractContext,
    defaults: &ContractDefaults,
) -> Result<OutputContract, BindError> {
    let explicit = returning.map(OutputContract::from_clause).transpose()?;
    match context {
        ContractContext::Projection | ContractContext::RagGeneration => {
            Ok(explicit.unwrap_or(OutputContract::FreeText))
        }
        ContractContext::AvgInput => match explicit {
            None => {
                let (lo, hi) = defaults.aggregate_range;
                OutputContract::int_range(lo, hi)
            }
            Some(c @ OutputContract::IntRange { .. }) => Ok(c),
            Some(other) => Err(BindError::ContractConflict(format!(
                "AVG needs an integer score but the call returns {other}"
            ))),
        },
        ContractContext::EqualityWith(lit) => match (explicit, lit) {
            (None, Literal::Str(l)) if l == "Yes" => OutputContract::choice(["Yes", "No"]),
            (None, Literal::Str(l)) => {
                OutputContract::choice([l.clone(), defaults.predicate_complement.clone()])
            }
            (None, other) => Err(BindError::ContractConflict(format!(
                "comparing an LLM call to {other} needs an explicit RETURNING clause"
            ))),
            (Some(OutputContract::FreeText), Literal::Str(_)) => Ok(OutputContract::FreeText),
            (Some(OutputContract::Choice { options }), Literal::Str(l)) => {
                if options.contains(l) {
                    Ok(OutputContract::Choice { options })
                } else {
                    Err(BindError::ContractConflict(format!("\"{l}\" is not one of the declared choices")))
                }
            }
            (Some(OutputContract::IntRange { lo, hi }), Literal::Int(v)) => {
                if (lo..=hi).contains(v) {
                    Ok(OutputContract::IntRange { lo, hi })
                } else {
                    Err(BindError::ContractConflict(format!("{v} is outside the declared range {lo}..={hi}")))
                }
            }
            (Some(c), lit) => Err(BindError::ContractConflict(format!("cannot compare a {c} result to {lit}"))),
        },
    }
}

/// A prompt template with `{name}` placeholders.
///
/// Placeholders are matched to arguments by position of first appearance;
/// the names only label the slots. A repeated name reuses its slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Template {
    text: String,
    segments: Vec<Segment>,
    slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Segment {
    Text(String),
    Slot(usize),
}

impl Template {
    pub fn parse(text: &str) -> Template {
        let mut segments = Vec::new();
        let mut slots: Vec<String> = Vec::new();
        let mut rest = text;
        let mut literal = String::new();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find(['{', '}']) {
                Some(close) if after.as_bytes()[close] == b'}' && close > 0 => {
                    literal.push_str(&rest[..open]);
                    if !literal.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut literal)));
                    }
                    let name = after[..close].to_string();
                    let slot = match slots.iter().position(|s| *s == name) {
                        Some(i) => i,
                        None => {
                            slots.push(name);
                            slots.len() - 1
                        }
                    };
                    segments.push(Segment::Slot(slot));
                    rest = &after[close + 1..];
                }
                _ => {
                    literal.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Text(literal));
        }
        Template { text: text.to_string(), segments, slots }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> &[String] {
        &self.slots
    }

    /// Literal text before the first placeholder; identical for every row.
    pub fn static_prefix(&self) -> &str {
        match self.segments.first() {
            Some(Segment::Text(t)) => t,
            _ => "",
        }
    }

    /// Total length of the literal (non-placeholder) text.
    pub fn literal_len(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.chars().count(),
                Segment::Slot(_) => 0,
            })
            .sum()
    }

    /// How many times each slot occurs in the text.
    pub fn slot_occurrences(&self) -> Vec<usize> {
        let mut counts = vec![0; self.slots.len()];
        for seg in &self.segments {
            if let Segment::Slot(i) = seg {
                counts[*i] += 1;
            }
        }
        counts
    }

    /// The slot right after the static prefix, with the length of the
    /// literal text that follows it up to the next slot.
    pub fn leading_slot(&self) -> Option<(usize, usize)> {
        let mut segs = self.segments.iter().skip_while(|s| matches!(s, Segment::Text(_)));
        match segs.next() {
            Some(Segment::Slot(i)) => {
                let after = match segs.next() {
                    Some(Segment::Text(t)) => t.chars().count(),
                    _ => 0,
                };
                Some((*i, after))
            }
            _ => None,
        }
    }

    /// Fills slots with `values`. Values beyond the slot count are appended
    /// on their own lines after the template text.
    pub fn render(&self, values: &[String]) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(i) => out.push_str(&values[*i]),
            }
        }
        for extra in values.iter().skip(self.slots.len()) {
            out.push('\n');
            out.push_str(extra);
        }
        out
    }
}
