//! On-disk catalog layout:
//!
//! ```text
//! <dir>/catalog.toml             schema manifest
//! <dir>/<table>.csv              one data file per table
//! <dir>/<table>.<column>.vidx    one vector index per indexed column
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_io, Catalog, CatalogError, Column, Schema};
use crate::vector::VectorIndex;

pub const MANIFEST_FILE: &str = "catalog.toml";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub tables: Vec<TableManifest>,
    #[serde(default)]
    pub indexes: Vec<IndexManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableManifest {
    pub name: String,
    pub file: String,
    pub row_count: u64,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexManifest {
    pub table: String,
    pub column: String,
    pub file: String,
}

impl Catalog {
    /// Writes every table and index under `dir`, replacing the manifest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CatalogError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest { version: MANIFEST_VERSION, tables: vec![], indexes: vec![] };
        for name in self.table_names() {
            let table = self.get_table(&name)?;
            let file = format!("{name}.csv");
            csv_io::write_csv(&table, std::fs::File::create(dir.join(&file))?)?;
            manifest.tables.push(TableManifest {
                name: name.clone(),
                file,
                row_count: table.row_count() as u64,
                columns: table.schema().columns.clone(),
            });
        }
        for (table, column) in self.index_targets() {
            let index = self.index(&table, &column).expect("listed index exists");
            let file = format!("{table}.{column}.vidx");
            index.write_to(std::fs::File::create(dir.join(&file))?)?;
            manifest.indexes.push(IndexManifest { table, column, file });
        }
        let text = toml::to_string_pretty(&manifest).map_err(|e| CatalogError::Manifest(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Opens a catalog directory. A missing directory or manifest yields an
    /// empty catalog.
    pub fn open(dir: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        let dir = dir.as_ref();
        let catalog = Catalog::new();
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(catalog);
        }
        let text = std::fs::read_to_string(&path)?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| CatalogError::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(CatalogError::Manifest(format!("unsupported manifest version {}", manifest.version)));
        }
        for t in &manifest.tables {
            let table = csv_io::load_csv(&dir.join(&t.file), &t.name, Some(Schema::new(t.columns.clone())))?;
            if table.row_count() as u64 != t.row_count {
                return Err(CatalogError::Manifest(format!(
                    "table `{}` has {} rows, manifest says {}",
                    t.name,
                    table.row_count(),
                    t.row_count
                )));
            }
            catalog.register(table);
        }
        for ix in &manifest.indexes {
            let file = std::fs::File::open(dir.join(&ix.file))?;
            let index = VectorIndex::read_from(std::io::BufReader::new(file))?;
            catalog.register_index(&ix.table, &ix.column, index);
        }
        Ok(catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Table;
    use crate::value::{DataType, Value};

    #[test]
    fn save_and_open_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new();
        cat.register(
            Table::new(
                "movies",
                Schema::new(vec![
                    Column::new("id", DataType::Int64),
                    Column::new("title", DataType::Text),
                    Column::new("ok", DataType::Bool),
                ]),
                vec![
                    vec![Value::Int(1), Value::text("A, \"quoted\""), Value::Bool(true)],
                    vec![Value::Int(2), Value::Null, Value::Null],
                ],
            )
            .unwrap(),
        );
        cat.save(dir.path()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(manifest.contains("name = \"movies\""));

        let back = Catalog::open(dir.path()).unwrap();
        assert_eq!(*back.get_table("movies").unwrap(), *cat.get_table("movies").unwrap());
    }

    #[test]
    fn open_missing_dir_is_empty() {
        let cat = Catalog::open("/no/such/catalog/dir").unwrap();
        assert!(cat.table_names().is_empty());
    }
}
