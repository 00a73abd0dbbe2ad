use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use llmq_core::executor::{write_csv, write_ndjson};
use llmq_core::{Engine, EngineConfig, EngineError, OutputFormat};

use crate::CliError;

/// Catalog directory used when neither the config nor `--catalog` names one.
pub const DEFAULT_CATALOG_DIR: &str = ".llmq";

fn catalog_dir(config: &EngineConfig) -> PathBuf {
    config.paths.catalog_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CATALOG_DIR))
}

fn open(mut config: EngineConfig) -> Result<Engine, CliError> {
    config.paths.catalog_dir = Some(catalog_dir(&config));
    Ok(Engine::open(config)?)
}

/// `column` or `table.column`; the table part must match the ingested table.
fn embed_column<'a>(table: &str, spec: &'a str) -> Result<&'a str, CliError> {
    match spec.split_once('.') {
        None => Ok(spec),
        Some((t, c)) if t == table => Ok(c),
        Some((t, _)) => Err(CliError::usage(format!("--embed names table `{t}` but the ingested table is `{table}`"))),
    }
}

pub fn ingest(config: EngineConfig, table: &str, csv: &Path, embed: Option<&str>) -> Result<(), CliError> {
    let dir = catalog_dir(&config);
    let engine = open(config)?;
    let loaded = engine.catalog().load_csv(csv, table, None).map_err(EngineError::from)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{table}: {} rows", loaded.row_count())?;
    for col in &loaded.schema().columns {
        let stats = engine.catalog().column_stats(table, &col.name).map_err(EngineError::from)?;
        writeln!(
            out,
            "  {:<24} {:<8} distinct={} nulls={}",
            col.name, col.ty, stats.distinct_count, stats.null_count
        )?;
    }
    if let Some(spec) = embed {
        let column = embed_column(table, spec)?;
        let n = engine.build_index(table, column)?;
        let dim = engine.catalog().index(table, column).map_or(0, |i| i.dim());
        writeln!(out, "indexed {table}.{column}: {n} vectors, dim {dim}")?;
    }
    engine.catalog().save(&dir).map_err(EngineError::from)?;
    writeln!(out, "catalog saved to {}", dir.display())?;
    Ok(())
}

pub fn run(
    config: EngineConfig,
    sql: &str,
    format: OutputFormat,
    output: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<(), CliError> {
    let engine = open(config)?;
    let result = engine.run(sql)?;
    let sink: Box<dyn Write> = match output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    match format {
        OutputFormat::Csv => write_csv(sink, &result.columns, &result.rows).map_err(|e| CliError::usage(e.to_string()))?,
        OutputFormat::Ndjson => write_ndjson(sink, &result.columns, &result.rows)?,
    }
    match metrics {
        Some(path) => {
            let text = serde_json::to_string_pretty(&result.metrics.to_json()).expect("metrics serialize");
            std::fs::write(path, text + "\n")?;
        }
        None => eprint!("{}", result.metrics.render_table()),
    }
    Ok(())
}

pub fn explain(config: EngineConfig, sql: &str, canonical: bool) -> Result<(), CliError> {
    let engine = open(config)?;
    print!("{}", engine.explain(sql, canonical)?);
    Ok(())
}
