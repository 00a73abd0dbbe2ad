use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{CatalogError, Column, Schema, Table};
use crate::value::{parse_vector, DataType, Value};

/// Rows inspected when inferring column types.
pub const INFERENCE_SAMPLE_ROWS: usize = 1000;

/// Loads an RFC-4180 CSV file with a header line.
///
/// Empty fields are nulls. Without an explicit schema, each column takes the
/// first type in int64, float64, bool, text that accepts every non-empty
/// value among the first [`INFERENCE_SAMPLE_ROWS`] rows; a later value that
/// does not parse under the inferred type is a hard error.
pub fn load_csv(path: &Path, table_name: &str, schema: Option<Schema>) -> Result<Table, CatalogError> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CatalogError::FileNotFound(path.to_path_buf()),
        _ => CatalogError::Io(e),
    })?;
    read_csv(file, table_name, schema)
}

pub fn read_csv<R: Read>(reader: R, table_name: &str, schema: Option<Schema>) -> Result<Table, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CatalogError::InvalidTable("missing header line".into()));
    }

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(CatalogError::SchemaMismatch {
                line,
                expected: header.len(),
                found: rec.len(),
            });
        }
        records.push((line, rec));
    }

    let schema = match schema {
        Some(s) => {
            if s.arity() != header.len() {
                return Err(CatalogError::SchemaMismatch {
                    line: 1,
                    expected: s.arity(),
                    found: header.len(),
                });
            }
            s
        }
        None => {
            let sample: Vec<&csv::StringRecord> =
                records.iter().take(INFERENCE_SAMPLE_ROWS).map(|(_, r)| r).collect();
            Schema::new(
                header
                    .iter()
                    .enumerate()
                    .map(|(i, name)| Column::new(name.clone(), infer_type(sample.iter().map(|r| &r[i]))))
                    .collect(),
            )
        }
    };

    let mut rows = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        let mut row = Vec::with_capacity(schema.arity());
        for (field, col) in rec.iter().zip(&schema.columns) {
            row.push(coerce(field, col, *line)?);
        }
        rows.push(row);
    }
    Table::new(table_name, schema, rows)
}

fn infer_type<'a>(values: impl Iterator<Item = &'a str> + Clone) -> DataType {
    let non_empty = || values.clone().filter(|v| !v.is_empty());
    if non_empty().next().is_none() {
        return DataType::Text;
    }
    if non_empty().all(|v| v.trim().parse::<i64>().is_ok()) {
        DataType::Int64
    } else if non_empty().all(|v| parse_float(v).is_some()) {
        DataType::Float64
    } else if non_empty().all(|v| parse_bool(v).is_some()) {
        DataType::Bool
    } else {
        DataType::Text
    }
}

fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|f| f.is_finite())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn coerce(field: &str, col: &Column, line: u64) -> Result<Value, CatalogError> {
    if field.is_empty() {
        return Ok(Value::Null);
    }
    let err = || CatalogError::TypeCoercion {
        column: col.name.clone(),
        ty: col.ty,
        value: field.to_string(),
        line,
    };
    Ok(match col.ty {
        DataType::Text => Value::text(field),
        DataType::Int64 => Value::Int(field.trim().parse().map_err(|_| err())?),
        DataType::Float64 => Value::Float(parse_float(field).ok_or_else(err)?),
        DataType::Bool => Value::Bool(parse_bool(field).ok_or_else(err)?),
        DataType::Vector => Value::Vector(Arc::from(parse_vector(field).ok_or_else(err)?)),
    })
}

/// Writes a table as CSV with a header. Nulls become empty fields.
pub fn write_csv<W: Write>(table: &Table, writer: W) -> Result<(), CatalogError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.schema().columns.iter().map(|c| c.name.as_str()))?;
    for row in table.rows() {
        w.write_record(row.iter().map(|v| if v.is_null() { String::new() } else { v.render() }))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Table, CatalogError> {
        read_csv(text.as_bytes(), "t", None)
    }

    #[test]
    fn header_only_is_empty_table() {
        let t = load("a,b\n").unwrap();
        assert_eq!(t.row_count(), 0);
        assert_eq!(t.schema().arity(), 2);
    }

    #[test]
    fn arity_violation() {
        assert!(matches!(
            load("a,b\n1,2,3\n"),
            Err(CatalogError::SchemaMismatch { expected: 2, found: 3, .. })
        ));
    }

    #[test]
    fn inference_precedence() {
        let t = load("i,f,b,s\n1,1.5,true,x\n2,2,False,7\n").unwrap();
        let tys: Vec<_> = t.schema().columns.iter().map(|c| c.ty).collect();
        assert_eq!(tys, [DataType::Int64, DataType::Float64, DataType::Bool, DataType::Text]);
        assert_eq!(t.rows()[1][1], Value::Float(2.0));
    }

    #[test]
    fn quoted_fields_with_commas_newlines_and_quotes() {
        let t = load("a,b\n\"x, y\",\"line1\nline2\"\n\"say \"\"hi\"\"\",z\n").unwrap();
        assert_eq!(t.rows()[0][0], Value::text("x, y"));
        assert_eq!(t.rows()[0][1], Value::text("line1\nline2"));
        assert_eq!(t.rows()[1][0], Value::text("say \"hi\""));
    }

    #[test]
    fn late_nonconforming_value_is_an_error() {
        let mut text = String::from("n\n");
        for i in 0..INFERENCE_SAMPLE_ROWS {
            text.push_str(&format!("{i}\n"));
        }
        text.push_str("oops\n");
        assert!(matches!(load(&text), Err(CatalogError::TypeCoercion { .. })));
    }

    #[test]
    fn explicit_schema_is_enforced() {
        let schema = Schema::new(vec![Column::new("a", DataType::Int64)]);
        let err = read_csv("a\nxyz\n".as_bytes(), "t", Some(schema)).unwrap_err();
        assert!(matches!(err, CatalogError::TypeCoercion { .. }));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv"), "t", None),
            Err(CatalogError::FileNotFound(_))
        ));
    }

    #[test]
    fn write_then_read_is_lossless() {
        let src = "a,b,c\n\"x, \"\"q\"\"\",1,\n,2,true\n";
        let t = load(src).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "t", Some(t.schema().clone())).unwrap();
        assert_eq!(back.rows(), t.rows());
    }
}
