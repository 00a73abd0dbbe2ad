//! Compiles output contracts into constrained-decoding request fields.

use serde_json::{json, Map, Value as Json};

use super::{ConstraintDialect, LlmError};
use crate::sql::{OutputContract, SchemaFieldType};

/// Extra top-level fields merged into the chat-completions body.
pub type ConstraintPayload = Map<String, Json>;

/// Name of the wrapper property in the JSON-schema dialect. Strict
/// structured-output endpoints require an object at the top level, so
/// scalar contracts are wrapped as `{"value": ...}`.
pub(crate) const WRAP_KEY: &str = "value";

pub fn constraint_payload(contract: &OutputContract, dialect: ConstraintDialect) -> Result<ConstraintPayload, LlmError> {
    let mut out = Map::new();
    if !contract.is_constrained() {
        return Ok(out);
    }
    match dialect {
        ConstraintDialect::None => {
            return Err(LlmError::UnsupportedDialect { dialect, contract: contract.to_string() });
        }
        ConstraintDialect::JsonSchemaResponseFormat => {
            let schema = json!({
                "type": "object",
                "properties": { WRAP_KEY: value_schema(contract) },
                "required": [WRAP_KEY],
                "additionalProperties": false,
            });
            out.insert(
                "response_format".into(),
                json!({
                    "type": "json_schema",
                    "json_schema": { "name": "query_output", "strict": true, "schema": schema },
                }),
            );
        }
        ConstraintDialect::GuidedChoiceRegex => match contract {
            OutputContract::Choice { options } => {
                let alts: Vec<String> = options.iter().map(|o| regex::escape(o)).collect();
                out.insert("guided_regex".into(), Json::String(format!("^({})$", alts.join("|"))));
            }
            OutputContract::IntRange { lo, hi } => {
                out.insert("guided_regex".into(), Json::String(int_range_regex(*lo, *hi)));
            }
            OutputContract::SchemaText { .. } => {
                out.insert("guided_json".into(), value_schema(contract));
            }
            OutputContract::FreeText => {}
        },
    }
    Ok(out)
}

/// JSON schema of the value itself, before wrapping.
pub(crate) fn value_schema(contract: &OutputContract) -> Json {
    match contract {
        OutputContract::FreeText => json!({ "type": "string" }),
        OutputContract::Choice { options } => json!({ "type": "string", "enum": options }),
        OutputContract::IntRange { lo, hi } => json!({ "type": "integer", "minimum": lo, "maximum": hi }),
        OutputContract::SchemaText { fields } => {
            let mut props = Map::new();
            for f in fields {
                let ty = match f.ty {
                    SchemaFieldType::Text => "string",
                    SchemaFieldType::Int => "integer",
                    SchemaFieldType::Float => "number",
                    SchemaFieldType::Bool => "boolean",
                };
                props.insert(f.name.clone(), json!({ "type": ty }));
            }
            let required: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
            json!({ "type": "object", "properties": props, "required": required, "additionalProperties": false })
        }
    }
}

/// Anchored regex matching exactly the canonical decimal forms of the
/// integers in `lo..=hi` (no leading zeros, no plus sign).
pub fn int_range_regex(lo: i64, hi: i64) -> String {
    assert!(lo <= hi, "empty range");
    let mut alts = Vec::new();
    if lo < 0 {
        // magnitudes of the negative part
        let neg_hi = lo.unsigned_abs();
        let neg_lo = if hi < 0 { hi.unsigned_abs() } else { 1 };
        let parts = unsigned_range_patterns(neg_lo, neg_hi);
        if parts.len() == 1 {
            alts.push(format!("-{}", parts[0]));
        } else {
            alts.push(format!("-(?:{})", parts.join("|")));
        }
    }
    if hi >= 0 {
        let start = lo.max(0) as u64;
        alts.extend(unsigned_range_patterns(start, hi as u64));
    }
    if alts.len() == 1 {
        format!("^{}$", alts[0])
    } else {
        format!("^(?:{})$", alts.join("|"))
    }
}

fn digit_count(n: u64) -> u32 {
    n.checked_ilog10().map_or(1, |d| d + 1)
}

/// Splits `lo..=hi` into blocks of the form `prefix [a-b] [0-9]{k}`.
fn unsigned_range_patterns(lo: u64, hi: u64) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = lo;
    loop {
        let len = digit_count(start);
        let len_max = if len >= 20 { u64::MAX } else { 10u64.pow(len) - 1 };
        let seg_hi = hi.min(len_max);
        blocks_same_length(start, seg_hi, &mut out);
        if seg_hi == hi {
            break;
        }
        start = seg_hi + 1;
    }
    out
}

fn blocks_same_length(lo: u64, hi: u64, out: &mut Vec<String>) {
    let len = digit_count(lo);
    let cap = 10u64.pow(len - 1);
    let mut start = lo;
    loop {
        let mut step: u64 = 1;
        while step < cap
            && start % (step * 10) == 0
            && start.checked_add(step * 10 - 1).is_some_and(|e| e <= hi)
        {
            step *= 10;
        }
        let mut end = start + (step - 1);
        while let Some(next_end) = end.checked_add(step) {
            if next_end > hi || (end + 1) % (step * 10) == 0 {
                break;
            }
            end = next_end;
        }
        out.push(block_pattern(start, end, step));
        if end >= hi {
            break;
        }
        start = end + 1;
    }
}

fn block_pattern(start: u64, end: u64, step: u64) -> String {
    let s = start.to_string();
    let e = end.to_string();
    let k = step.ilog10() as usize;
    let pivot = s.len() - k - 1;
    let (d1, d2) = (s.as_bytes()[pivot] as char, e.as_bytes()[pivot] as char);
    let mut p = s[..pivot].to_string();
    if d1 == d2 {
        p.push(d1);
    } else {
        p.push_str(&format!("[{d1}-{d2}]"));
    }
    match k {
        0 => {}
        1 => p.push_str("[0-9]"),
        _ => p.push_str(&format!("[0-9]{{{k}}}")),
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use regex::Regex;

    #[test]
    fn spec_like_examples() {
        assert_eq!(int_range_regex(0, 5), "^[0-5]$");
        let choice = OutputContract::Choice { options: vec!["Yes".into(), "No".into()] };
        let p = constraint_payload(&choice, ConstraintDialect::GuidedChoiceRegex).unwrap();
        assert_eq!(p["guided_regex"], "^(Yes|No)$");
        assert!(constraint_payload(&OutputContract::FreeText, ConstraintDialect::GuidedChoiceRegex).unwrap().is_empty());
        assert!(constraint_payload(&OutputContract::FreeText, ConstraintDialect::None).unwrap().is_empty());
    }

    #[test]
    fn int_range_schema() {
        let p = constraint_payload(&OutputContract::IntRange { lo: 0, hi: 5 }, ConstraintDialect::JsonSchemaResponseFormat)
            .unwrap();
        let inner = &p["response_format"]["json_schema"]["schema"]["properties"]["value"];
        assert_eq!(inner["type"], "integer");
        assert_eq!(inner["minimum"], 0);
        assert_eq!(inner["maximum"], 5);
    }

    #[test]
    fn none_dialect_rejects_constraints() {
        assert!(matches!(
            constraint_payload(&OutputContract::IntRange { lo: 0, hi: 5 }, ConstraintDialect::None),
            Err(LlmError::UnsupportedDialect { .. })
        ));
    }

    #[test]
    fn choice_options_are_escaped() {
        let c = OutputContract::Choice { options: vec!["a.b".into(), "(x)".into()] };
        let p = constraint_payload(&c, ConstraintDialect::GuidedChoiceRegex).unwrap();
        let re = Regex::new(p["guided_regex"].as_str().unwrap()).unwrap();
        assert!(re.is_match("a.b") && re.is_match("(x)") && !re.is_match("axb"));
    }

    fn check_range(lo: i64, hi: i64) {
        let re = Regex::new(&int_range_regex(lo, hi)).unwrap();
        for n in (lo - 25)..=(hi + 25) {
            assert_eq!(re.is_match(&n.to_string()), (lo..=hi).contains(&n), "{n} against {lo}..={hi}: {re}");
        }
        assert!(!re.is_match("00") && !re.is_match("-0"));
    }

    #[test]
    fn int_ranges_exhaustive_small() {
        for lo in -130..=130 {
            for hi in (lo..=130).step_by(7) {
                check_range(lo, hi);
            }
        }
    }

    #[test]
    fn int_ranges_larger() {
        for (lo, hi) in [(0, 1000), (7, 12345), (-999, 20), (99, 101), (1, 1), (-5, -5), (1000, 9999), (-10000, -9999)] {
            check_range(lo, hi);
        }
    }

    #[test]
    fn int_ranges_extremes() {
        let re = Regex::new(&int_range_regex(i64::MIN, i64::MAX)).unwrap();
        for n in [i64::MIN, -1, 0, 1, i64::MAX, 123456789] {
            assert!(re.is_match(&n.to_string()));
        }
        assert!(!re.is_match("01") && !re.is_match("-0") && !re.is_match("+1"));
    }
}
