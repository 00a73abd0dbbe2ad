//! Result writers.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value as Json};

use crate::value::{Row, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Ndjson,
}

/// CSV with a header row. Nulls are empty fields.
pub fn write_csv<W: Write>(out: W, columns: &[String], rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row.iter().map(|v| if v.is_null() { String::new() } else { v.render() }))?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line, keyed by column name.
pub fn write_ndjson<W: Write>(mut out: W, columns: &[String], rows: &[Row]) -> std::io::Result<()> {
    for row in rows {
        let obj: Map<String, Json> = columns.iter().cloned().zip(row.iter().map(to_json)).collect();
        serde_json::to_writer(&mut out, &obj)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn to_json(v: &Value) -> Json {
    match v {
        Value::Null => Json::Null,
        Value::Text(s) => Json::String(s.to_string()),
        Value::Int(i) => Json::Number((*i).into()),
        Value::Float(f) => Number::from_f64(*f).map(Json::Number).unwrap_or(Json::Null),
        Value::Bool(b) => Json::Bool(*b),
        Value::Vector(xs) => {
            Json::Array(xs.iter().map(|x| Number::from_f64(*x as f64).map(Json::Number).unwrap_or(Json::Null)).collect())
        }
    }
}
