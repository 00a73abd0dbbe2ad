//! Query pipeline: parse, bind, plan, optimize, execute.

use std::sync::Arc;

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::config::{ConfigError, EngineConfig};
use crate::executor::{ExecError, Executor, QueryResult};
use crate::fixtures;
use crate::llm::{Backend, BackendKind, HttpBackend, LlmError, MockBackend};
use crate::planner::{annotate, build_logical, explain, optimize_with_trace, LogicalPlan, PlanError, RuleStep};
use crate::sql::{bind, parse, BindError, SqlError};
use crate::vector::{VectorError, VectorIndex};

/// Texts per embedding request when building an index.
const EMBED_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Parse(#[from] SqlError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

impl EngineError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Parse(_) => 3,
            EngineError::Bind(_) | EngineError::Plan(_) => 4,
            EngineError::Exec(_) => 5,
            EngineError::Config(_) | EngineError::Catalog(_) | EngineError::Llm(_) | EngineError::Vector(_) => 2,
        }
    }
}

/// Plans for one query before and after rewriting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub canonical: LogicalPlan,
    pub optimized: LogicalPlan,
    pub trace: Vec<RuleStep>,
}

pub struct Engine {
    config: EngineConfig,
    catalog: Arc<Catalog>,
    backend: Arc<dyn Backend>,
}

impl Engine {
    /// Builds the backend the config describes.
    pub fn new(config: EngineConfig, catalog: Catalog) -> Result<Engine, EngineError> {
        let backend = Engine::backend_for(&config)?;
        Ok(Engine::with_backend(config, catalog, backend))
    }

    pub fn with_backend(config: EngineConfig, catalog: Catalog, backend: Arc<dyn Backend>) -> Engine {
        Engine { config, catalog: Arc::new(catalog), backend }
    }

    /// Opens the configured catalog directory, or starts empty.
    pub fn open(config: EngineConfig) -> Result<Engine, EngineError> {
        let catalog = match &config.paths.catalog_dir {
            Some(dir) => Catalog::open(dir)?,
            None => Catalog::new(),
        };
        Engine::new(config, catalog)
    }

    pub fn backend_for(config: &EngineConfig) -> Result<Arc<dyn Backend>, EngineError> {
        config.validate()?;
        Ok(match config.backend.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(config.effective_mock())),
            BackendKind::OpenaiCompatibleHttp => {
                Arc::new(HttpBackend::new(config.backend.clone(), Some(config.vector.dim))?)
            }
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EngineConfig {
        &mut self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn prepare(&self, sql: &str) -> Result<Prepared, EngineError> {
        let ast = parse(sql)?;
        let bound = bind(&ast, &self.catalog, &self.config.bind_options()?)?;
        let mut canonical = build_logical(Arc::new(bound), &*self.catalog)?;
        annotate(&mut canonical, &*self.catalog, &self.config.planner);
        let (optimized, trace) = optimize_with_trace(&canonical, &*self.catalog, &self.config.planner);
        Ok(Prepared { canonical, optimized, trace })
    }

    pub fn explain(&self, sql: &str, canonical: bool) -> Result<String, EngineError> {
        let p = self.prepare(sql)?;
        Ok(explain(if canonical { &p.canonical } else { &p.optimized }))
    }

    pub fn run(&self, sql: &str) -> Result<QueryResult, EngineError> {
        let p = self.prepare(sql)?;
        self.run_plan(&p.optimized)
    }

    pub fn run_plan(&self, plan: &LogicalPlan) -> Result<QueryResult, EngineError> {
        let exec = Executor::new(
            &self.catalog,
            &*self.backend,
            self.config.scheduler.clone(),
            self.config.planner.clone(),
            self.config.executor.clone(),
        );
        Ok(exec.execute(plan)?)
    }

    /// Embeds every value of `table.column` through the backend and
    /// registers the index. Row ids are row ordinals. Returns the entry count.
    pub fn build_index(&self, table: &str, column: &str) -> Result<usize, EngineError> {
        let t = self.catalog.get_table(table)?;
        let col = t.schema().index_of(column).ok_or_else(|| CatalogError::UnknownColumn {
            table: table.to_string(),
            column: column.to_string(),
        })?;
        let texts: Vec<String> = t.rows().iter().map(|r| r[col].render()).collect();
        let mut entries = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            for e in self.backend.embed(chunk)? {
                entries.push((entries.len() as u64, e));
            }
        }
        let n = entries.len();
        let index = VectorIndex::build(entries, self.config.vector.index_strategy(), self.config.seed)?;
        self.catalog.register_index(table, column, index);
        Ok(n)
    }

    /// Registers the synthetic `movies`, `reviews` and `squad` tables and
    /// indexes `squad.context`. `rows` is the review count and the number of
    /// answerable questions; a third as many unanswerable ones are added,
    /// at least one so the index is never empty.
    pub fn load_fixtures(&self, rows: usize) -> Result<(), EngineError> {
        let (movies, reviews) = fixtures::movies_reviews(rows, self.config.seed);
        self.catalog.register(movies);
        self.catalog.register(reviews);
        self.catalog.register(fixtures::squad(rows, rows.div_ceil(3).max(1), self.config.seed));
        self.build_index("squad", "context")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite;

    #[test]
    fn exit_codes_by_stage() {
        let engine = Engine::new(EngineConfig::default(), Catalog::new()).unwrap();
        engine.load_fixtures(8).unwrap();
        assert_eq!(engine.run("SELECT FROM").unwrap_err().exit_code(), 3);
        assert_eq!(engine.run("SELECT x FROM nowhere").unwrap_err().exit_code(), 4);
        assert_eq!(engine.run("SELECT m.movie_title FROM movies m").unwrap().rows.len(), 2);
    }

    #[test]
    fn suite_runs_on_small_fixture() {
        let engine = Engine::new(EngineConfig::default(), Catalog::new()).unwrap();
        engine.load_fixtures(12).unwrap();
        for (name, sql) in suite::QUERIES {
            let r = engine.run(sql).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(r.columns.len(), 1, "{name}");
        }
    }

    #[test]
    fn empty_fixture_gives_empty_results() {
        let engine = Engine::new(EngineConfig::default(), Catalog::new()).unwrap();
        engine.load_fixtures(0).unwrap();
        for (name, sql) in suite::QUERIES {
            let r = engine.run(sql).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(r.rows.is_empty(), "{name}");
            assert_eq!(r.metrics.requests_issued, 0, "{name}");
        }
    }
}
