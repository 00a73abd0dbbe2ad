use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::sql::{OutputContract, SchemaFieldType};
use crate::value::Value;

/// A model output that satisfies its contract.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TypedValue {
    Text(String),
    Label(String),
    Score(i64),
    Record(Vec<(String, RecordField)>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RecordField {
    Text(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl TypedValue {
    /// Column value the executor stores. Records are stored as compact JSON.
    pub fn to_value(&self) -> Value {
        match self {
            TypedValue::Text(s) | TypedValue::Label(s) => Value::text(s),
            TypedValue::Score(i) => Value::Int(*i),
            TypedValue::Record(fields) => {
                let mut map = serde_json::Map::new();
                for (k, v) in fields {
                    map.insert(k.clone(), serde_json::to_value(v).expect("record fields serialize"));
                }
                Value::text(serde_json::Value::Object(map).to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationReason {
    NotInChoiceSet,
    NotAnInteger,
    OutOfRange,
    SchemaViolation,
}

impl fmt::Display for ValidationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationReason::NotInChoiceSet => "not in choice set",
            ValidationReason::NotAnInteger => "not an integer",
            ValidationReason::OutOfRange => "out of range",
            ValidationReason::SchemaViolation => "schema violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("output rejected ({reason}): {raw:?}")]
pub struct ValidationError {
    pub reason: ValidationReason,
    pub raw: String,
}

fn reject(reason: ValidationReason, raw: &str) -> ValidationError {
    let mut raw = raw.to_string();
    if raw.len() > 200 {
        let mut cut = 200;
        while !raw.is_char_boundary(cut) {
            cut -= 1;
        }
        raw.truncate(cut);
    }
    ValidationError { reason, raw }
}

/// Checks a raw model output against its contract.
///
/// Only leading and trailing whitespace is forgiven; an answer with any
/// extra text is rejected rather than searched for a valid substring.
pub fn validate_output(contract: &OutputContract, raw: &str) -> Result<TypedValue, ValidationError> {
    let text = raw.trim();
    match contract {
        OutputContract::FreeText => Ok(TypedValue::Text(text.to_string())),
        OutputContract::Choice { options } => options
            .iter()
            .find(|o| o.as_str() == text)
            .map(|o| TypedValue::Label(o.clone()))
            .ok_or_else(|| reject(ValidationReason::NotInChoiceSet, raw)),
        OutputContract::IntRange { lo, hi } => {
            let digits = text.strip_prefix('-').unwrap_or(text);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(reject(ValidationReason::NotAnInteger, raw));
            }
            match text.parse::<i64>() {
                Ok(v) if (*lo..=*hi).contains(&v) => Ok(TypedValue::Score(v)),
                _ => Err(reject(ValidationReason::OutOfRange, raw)),
            }
        }
        OutputContract::SchemaText { fields } => {
            let parsed: serde_json::Value =
                serde_json::from_str(text).map_err(|_| reject(ValidationReason::SchemaViolation, raw))?;
            let obj = parsed.as_object().ok_or_else(|| reject(ValidationReason::SchemaViolation, raw))?;
            if obj.len() != fields.len() {
                return Err(reject(ValidationReason::SchemaViolation, raw));
            }
            let mut out = Vec::with_capacity(fields.len());
            for f in fields {
                let v = obj.get(&f.name).ok_or_else(|| reject(ValidationReason::SchemaViolation, raw))?;
                let field = match (f.ty, v) {
                    (SchemaFieldType::Text, serde_json::Value::String(s)) => RecordField::Text(s.clone()),
                    (SchemaFieldType::Int, serde_json::Value::Number(n)) if n.is_i64() => {
                        RecordField::Int(n.as_i64().unwrap())
                    }
                    (SchemaFieldType::Float, serde_json::Value::Number(n)) => RecordField::Float(n.as_f64().unwrap()),
                    (SchemaFieldType::Bool, serde_json::Value::Bool(b)) => RecordField::Bool(*b),
                    _ => return Err(reject(ValidationReason::SchemaViolation, raw)),
                };
                out.push((f.name.clone(), field));
            }
            Ok(TypedValue::Record(out))
        }
    }
}
