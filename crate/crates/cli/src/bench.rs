//! `llmq bench`: the suite on seeded fixtures, reported as a JSON document
//! and a console table.
//!
//! Report document (`schema_version` 1), keys sorted:
//! * `backend`: `{kind, model}`; `data`: `"fixtures"` or `"catalog"`;
//!   `rows`, `seed`, `window`
//! * `queries`: one entry per query with `name`, `status` (`ok`/`error`),
//!   and either `output_rows`, `llm_calls`, `rows_submitted`,
//!   `prompt_tokens`, `output_tokens`, `busy_fraction`, `dedup_hits`,
//!   `makespan_ms` and the full `metrics` document, or `exit_code` and
//!   `error`
//! * `wall_clock`: `{total_ms}` at the top level and in every query entry.
//!   Nothing else depends on wall time, so two mock runs with the same seed
//!   differ only under these keys.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use llmq_core::llm::BackendKind;
use llmq_core::{suite, Catalog, Engine, EngineConfig};
use serde_json::{json, Value as Json};

use crate::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable that must be `1` for a bench against a real backend.
pub const LIVE_ENV: &str = "LLMQ_LIVE";

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Queries: `q1..q5`, `all`, or a comma list such as `q2,q4`.
    #[arg(long, default_value = "q1..q5")]
    suite: String,
    /// Reviews and answerable questions in the generated fixtures.
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Scheduler window; overrides the config.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum, default_value = "fixtures")]
    data: DataSource,
    /// Allow a real backend. Also requires LLMQ_LIVE=1.
    #[arg(long)]
    live: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DataSource {
    /// Seeded synthetic tables sized by `--rows`.
    Fixtures,
    /// Tables already in the catalog directory.
    Catalog,
}

fn parse_suite(spec: &str) -> Result<Vec<&'static str>, CliError> {
    let names: Vec<&'static str> = suite::QUERIES.iter().map(|(n, _)| *n).collect();
    let position = |name: &str| {
        names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| CliError::usage(format!("unknown suite query `{}`", name.trim())))
    };
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        if part.trim().eq_ignore_ascii_case("all") {
            out.extend(&names);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (position(a)?, position(b)?);
            if a > b {
                return Err(CliError::usage(format!("empty suite range `{part}`")));
            }
            out.extend(&names[a..=b]);
        } else {
            out.push(names[position(part)?]);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("empty suite"));
    }
    Ok(out)
}

fn query_entry(engine: &Engine, name: &str) -> (Json, Option<u8>) {
    let sql = suite::by_name(name).expect("suite name checked");
    let started = Instant::now();
    let outcome = engine.run(sql);
    let wall = json!({ "total_ms": started.elapsed().as_secs_f64() * 1000.0 });
    match outcome {
        Ok(r) => {
            let m = &r.metrics;
            let entry = json!({
                "name": name,
                "status": "ok",
                "output_rows": r.rows.len(),
                "llm_calls": m.requests_issued,
                "rows_submitted": m.rows_submitted,
                "prompt_tokens": m.prompt_tokens,
                "output_tokens": m.output_tokens,
                "busy_fraction": m.busy_fraction,
                "dedup_hits": m.dedup_hits,
                "makespan_ms": m.makespan_ms,
                "metrics": m.deterministic_json(),
                "wall_clock": wall,
            });
            (entry, None)
        }
        Err(e) => {
            let code = e.exit_code() as u8;
            let entry = json!({
                "name": name,
                "status": "error",
                "exit_code": code,
                "error": e.to_string(),
                "wall_clock": wall,
            });
            (entry, Some(code))
        }
    }
}

fn console_table(queries: &[Json]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<6} {:>8} {:>9} {:>12} {:>8} {:>10} {:>12} {:>10}",
        "query", "status", "rows", "llm calls", "tokens", "busy", "dedup hits", "makespan ms", "wall ms"
    );
    for q in queries {
        let wall = q["wall_clock"]["total_ms"].as_f64().unwrap_or(0.0);
        if q["status"] == "ok" {
            let tokens = q["prompt_tokens"].as_u64().unwrap_or(0) + q["output_tokens"].as_u64().unwrap_or(0);
            let _ = writeln!(
                out,
                "{:<6} {:<6} {:>8} {:>9} {:>12} {:>8.3} {:>10} {:>12.1} {:>10.1}",
                q["name"].as_str().unwrap_or(""),
                "ok",
                q["output_rows"].as_u64().unwrap_or(0),
                q["llm_calls"].as_u64().unwrap_or(0),
                tokens,
                q["busy_fraction"].as_f64().unwrap_or(0.0),
                q["dedup_hits"].as_u64().unwrap_or(0),
                q["makespan_ms"].as_f64().unwrap_or(0.0),
                wall
            );
        } else {
            let _ = writeln!(
                out,
                "{:<6} {:<6} {}",
                q["name"].as_str().unwrap_or(""),
                "error",
                q["error"].as_str().unwrap_or("")
            );
        }
    }
    out
}

pub fn bench(mut config: EngineConfig, args: &BenchArgs) -> Result<(), CliError> {
    let names = parse_suite(&args.suite)?;
    if config.backend.kind != BackendKind::Mock
        && !(args.live && std::env::var(LIVE_ENV).is_ok_and(|v| v == "1"))
    {
        return Err(CliError::usage(format!(
            "benchmarking a real backend needs both --live and {LIVE_ENV}=1"
        )));
    }
    if let Some(w) = args.window {
        config.scheduler.window = w;
    }
    config.validate().map_err(llmq_core::EngineError::from)?;

    let started = Instant::now();
    let engine = match args.data {
        DataSource::Fixtures => {
            let engine = Engine::new(config.clone(), Catalog::new())?;
            engine.load_fixtures(args.rows)?;
            engine
        }
        DataSource::Catalog => {
            if config.paths.catalog_dir.is_none() {
                config.paths.catalog_dir = Some(crate::commands::DEFAULT_CATALOG_DIR.into());
            }
            Engine::open(config.clone())?
        }
    };

    let mut queries = Vec::new();
    let mut failure = None;
    for name in &names {
        let (entry, code) = query_entry(&engine, name);
        failure = failure.or(code);
        queries.push(entry);
    }
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "seed": config.seed,
        "rows": args.rows,
        "data": match args.data { DataSource::Fixtures => "fixtures", DataSource::Catalog => "catalog" },
        "window": config.scheduler.window,
        "backend": { "kind": config.backend.kind, "model": config.backend.model },
        "queries": queries,
        "wall_clock": { "total_ms": started.elapsed().as_secs_f64() * 1000.0 },
    });

    print!("{}", console_table(report["queries"].as_array().expect("queries array")));
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text + "\n")?;
    }
    match failure {
        None => Ok(()),
        Some(code) => {
            let failed = report["queries"].as_array().unwrap().iter().filter(|q| q["status"] == "error").count();
            Err(CliError { code, message: format!("{failed} of {} queries failed", names.len()) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_specs() {
        assert_eq!(parse_suite("q1..q5").unwrap(), vec!["q1", "q2", "q3", "q4", "q5"]);
        assert_eq!(parse_suite("all").unwrap().len(), 5);
        assert_eq!(parse_suite("q4, Q2").unwrap(), vec!["q4", "q2"]);
        assert_eq!(parse_suite("q2..q3,q5").unwrap(), vec!["q2", "q3", "q5"]);
        assert!(parse_suite("q5..q1").is_err());
        assert!(parse_suite("q9").is_err());
        assert!(parse_suite("").is_err());
    }
}
