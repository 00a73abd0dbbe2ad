//! Ingested tables, their schemas, per-column statistics and the vector
//! indexes built over text columns.
//!
//! Tables are immutable once registered; re-registering a name replaces the
//! table and drops its cached statistics and indexes. Lookups are
//! case-sensitive.

mod csv_io;
mod persist;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{DataType, Row, Value};
use crate::vector::VectorIndex;

pub use csv_io::{load_csv, read_csv, write_csv, INFERENCE_SAMPLE_ROWS};
pub use persist::{IndexManifest, Manifest, TableManifest};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("schema mismatch at line {line}: expected {expected} fields, found {found}")]
    SchemaMismatch { line: u64, expected: usize, found: usize },
    #[error("cannot coerce {value:?} to {ty} in column `{column}` (line {line})")]
    TypeCoercion { column: String, ty: DataType, value: String, line: u64 },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` in table `{table}`")]
    UnknownColumn { table: String, column: String },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Vector(#[from] crate::vector::VectorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: DataType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: DataType) -> Column {
        Column { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Schema {
        Schema { columns }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// An ingested relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    schema: Schema,
    rows: Vec<Row>,
}

impl Table {
    /// Builds a table, checking arity and value types of every row.
    pub fn new(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> Result<Table, CatalogError> {
        let name = name.into();
        let mut seen = HashSet::new();
        for c in &schema.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(CatalogError::InvalidTable(format!(
                    "duplicate column `{}` in `{name}`",
                    c.name
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.arity() {
                return Err(CatalogError::SchemaMismatch {
                    line: i as u64 + 2,
                    expected: schema.arity(),
                    found: row.len(),
                });
            }
            for (v, c) in row.iter().zip(&schema.columns) {
                if let Some(t) = v.data_type() {
                    if t != c.ty {
                        return Err(CatalogError::TypeCoercion {
                            column: c.name.clone(),
                            ty: c.ty,
                            value: v.render(),
                            line: i as u64 + 2,
                        });
                    }
                }
            }
        }
        Ok(Table { name, schema, rows })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_values(&self, column: &str) -> Option<impl Iterator<Item = &Value>> {
        let idx = self.schema.index_of(column)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }

    fn compute_stats(&self, column: &str) -> Option<ColumnStats> {
        let idx = self.schema.index_of(column)?;
        let mut distinct: HashSet<&Value> = HashSet::new();
        let mut nulls = 0u64;
        let mut text_chars = 0u64;
        for row in &self.rows {
            let v = &row[idx];
            if v.is_null() {
                nulls += 1;
                continue;
            }
            text_chars += v.render().chars().count() as u64;
            distinct.insert(v);
        }
        let non_null = self.rows.len() as u64 - nulls;
        Some(ColumnStats {
            table: self.name.clone(),
            column: column.to_string(),
            row_count: self.rows.len() as u64,
            distinct_count: distinct.len() as u64,
            null_count: nulls,
            avg_text_length: if non_null == 0 { 0.0 } else { text_chars as f64 / non_null as f64 },
        })
    }
}

/// Exact statistics for one column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStats {
    pub table: String,
    pub column: String,
    pub row_count: u64,
    pub distinct_count: u64,
    pub null_count: u64,
    /// Mean rendered length in characters over non-null values.
    pub avg_text_length: f64,
}

/// Registry of tables and vector indexes.
///
/// Readable concurrently; registration takes the write lock.
#[derive(Default)]
pub struct Catalog {
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
    indexes: RwLock<BTreeMap<(String, String), Arc<VectorIndex>>>,
    stats: Mutex<HashMap<(String, String), ColumnStats>>,
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    /// Registers (or replaces) a table.
    pub fn register(&self, table: Table) -> Arc<Table> {
        let name = table.name().to_string();
        let table = Arc::new(table);
        self.tables.write().unwrap().insert(name.clone(), Arc::clone(&table));
        self.stats.lock().unwrap().retain(|(t, _), _| t != &name);
        self.indexes.write().unwrap().retain(|(t, _), _| t != &name);
        table
    }

    /// Reads a CSV file and registers it under `table_name`.
    pub fn load_csv(
        &self,
        path: impl AsRef<std::path::Path>,
        table_name: &str,
        schema: Option<Schema>,
    ) -> Result<Arc<Table>, CatalogError> {
        let table = load_csv(path.as_ref(), table_name, schema)?;
        Ok(self.register(table))
    }

    pub fn get_table(&self, name: &str) -> Result<Arc<Table>, CatalogError> {
        self.tables
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().unwrap().keys().cloned().collect()
    }

    /// Exact column statistics, cached until the table is replaced.
    pub fn column_stats(&self, table: &str, column: &str) -> Result<ColumnStats, CatalogError> {
        let key = (table.to_string(), column.to_string());
        if let Some(s) = self.stats.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let t = self.get_table(table)?;
        let stats = t.compute_stats(column).ok_or_else(|| CatalogError::UnknownColumn {
            table: table.to_string(),
            column: column.to_string(),
        })?;
        self.stats.lock().unwrap().insert(key, stats.clone());
        Ok(stats)
    }

    pub fn register_index(&self, table: &str, column: &str, index: VectorIndex) -> Arc<VectorIndex> {
        let index = Arc::new(index);
        self.indexes
            .write()
            .unwrap()
            .insert((table.to_string(), column.to_string()), Arc::clone(&index));
        index
    }

    pub fn index(&self, table: &str, column: &str) -> Option<Arc<VectorIndex>> {
        self.indexes
            .read()
            .unwrap()
            .get(&(table.to_string(), column.to_string()))
            .cloned()
    }

    /// `(table, column)` pairs that have an index.
    pub fn index_targets(&self) -> Vec<(String, String)> {
        self.indexes.read().unwrap().keys().cloned().collect()
    }
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog")
            .field("tables", &self.table_names())
            .field("indexes", &self.index_targets())
            .finish()
    }
}
