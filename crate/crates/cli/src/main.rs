//! `llmq`: ingest CSV tables, run and explain queries, and benchmark the
//! five-query suite.
//!
//! Exit status: 0 success, 2 configuration, catalog, I/O or backend
//! failure, 3 SQL syntax error, 4 bind or planning error, 5 execution error.

mod bench;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llmq_core::llm::BackendKind;
use llmq_core::{EngineConfig, EngineError, OutputFormat};

#[derive(Parser, Debug)]
#[command(name = "llmq", version, about = "Relational queries with LLM operators")]
struct Cli {
    /// Engine config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Catalog directory; overrides `paths.catalog_dir`.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Backend; overrides `backend.kind`.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a CSV file into the catalog, optionally embedding one column.
    Ingest {
        table: String,
        csv: PathBuf,
        /// Column to embed and index, as `column` or `table.column`.
        #[arg(long)]
        embed: Option<String>,
    },
    /// Execute a query.
    Run {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Write results here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the metrics document here instead of a table on stderr.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Accept raw model output without checking it against the call's
        /// output contract.
        #[arg(long)]
        no_validate: bool,
    },
    /// Print the optimized plan.
    Explain {
        #[command(flatten)]
        query: QueryArgs,
        /// Print the plan before rewriting.
        #[arg(long)]
        canonical: bool,
    },
    /// Run suite queries on seeded fixtures and report metrics.
    Bench(bench::BenchArgs),
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Inline SQL.
    sql: Option<String>,
    /// Read SQL from a file.
    #[arg(long, conflicts_with = "sql")]
    file: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Ndjson,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Ndjson => OutputFormat::Ndjson,
        }
    }
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<EngineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path).map_err(EngineError::from)?,
        None => EngineConfig::default(),
    };
    if let Some(dir) = &cli.catalog {
        config.paths.catalog_dir = Some(dir.clone());
    }
    match cli.backend {
        Some(BackendArg::Mock) => config.backend.kind = BackendKind::Mock,
        Some(BackendArg::Http) => config.backend.kind = BackendKind::OpenaiCompatibleHttp,
        None => {}
    }
    config.validate().map_err(EngineError::from)?;
    Ok(config)
}

fn read_query(q: &QueryArgs) -> Result<String, CliError> {
    match (&q.sql, &q.file) {
        (Some(sql), None) => Ok(sql.clone()),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display()))),
        _ => Err(CliError::usage("give a query inline or with --file")),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { table, csv, embed } => commands::ingest(config, &table, &csv, embed.as_deref()),
        Command::Run { query, format, output, metrics, no_validate } => {
            let mut config = config;
            if no_validate {
                config.scheduler.validate = false;
            }
            let sql = read_query(&query)?;
            commands::run(config, &sql, format.into(), output.as_deref(), metrics.as_deref())
        }
        Command::Explain { query, canonical } => commands::explain(config, &read_query(&query)?, canonical),
        Command::Bench(args) => bench::bench(config, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
