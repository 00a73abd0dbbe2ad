//! Engine configuration, read from a TOML file with one section per
//! subsystem. Every field has a default, so an empty file is valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::ExecOptions;
use crate::llm::{BackendDescriptor, MockConfig};
use crate::planner::PlannerConfig;
use crate::scheduler::SchedulerConfig;
use crate::sql::{BindOptions, ContractDefaults, IndexTarget};
use crate::vector::{GraphParams, IndexStrategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Exact,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorConfig {
    pub dim: usize,
    /// Neighbors retrieved when a similarity call gives no `k`.
    pub k: usize,
    pub strategy: StrategyKind,
    pub graph: GraphParams,
    /// `table.column` searched by `SIMILARITY_SEARCH`. Needed when the
    /// catalog holds more than one index.
    pub rag_index: Option<String>,
}

impl Default for VectorConfig {
    fn default() -> Self {
        VectorConfig { dim: 64, k: 3, strategy: StrategyKind::Exact, graph: GraphParams::default(), rag_index: None }
    }
}

impl VectorConfig {
    pub fn index_strategy(&self) -> IndexStrategy {
        match self.strategy {
            StrategyKind::Exact => IndexStrategy::ExactScan,
            StrategyKind::Graph => IndexStrategy::Graph(self.graph),
        }
    }

    pub fn rag_target(&self) -> Result<Option<IndexTarget>, ConfigError> {
        let Some(spec) = &self.rag_index else { return Ok(None) };
        match spec.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() => {
                Ok(Some(IndexTarget { table: t.to_string(), column: c.to_string() }))
            }
            _ => Err(ConfigError::Invalid(format!("vector.rag_index must be `table.column`, got `{spec}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractConfig {
    pub predicate_complement: String,
    pub aggregate_min: i64,
    pub aggregate_max: i64,
}

impl Default for ContractConfig {
    fn default() -> Self {
        let d = ContractDefaults::default();
        ContractConfig {
            predicate_complement: d.predicate_complement,
            aggregate_min: d.aggregate_range.0,
            aggregate_max: d.aggregate_range.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Directory holding the catalog manifest, table files and indexes.
    pub catalog_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Seeds the mock backend, index construction and fixture generation.
    pub seed: u64,
    pub backend: BackendDescriptor,
    /// Used when `backend.kind` is `mock`. Its own seed is replaced by the
    /// top-level one.
    pub mock: MockConfig,
    pub scheduler: SchedulerConfig,
    pub planner: PlannerConfig,
    pub vector: VectorConfig,
    pub executor: ExecOptions,
    pub contracts: ContractConfig,
    pub paths: Paths,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: 42,
            backend: BackendDescriptor::default(),
            mock: MockConfig::default(),
            scheduler: SchedulerConfig::default(),
            planner: PlannerConfig::default(),
            vector: VectorConfig::default(),
            executor: ExecOptions::default(),
            contracts: ContractConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<EngineConfig, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EngineConfig, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        EngineConfig::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scheduler.window == 0 {
            return Err(ConfigError::Invalid("scheduler.window must be at least 1".into()));
        }
        if self.vector.dim == 0 {
            return Err(ConfigError::Invalid("vector.dim must be at least 1".into()));
        }
        if self.vector.k == 0 {
            return Err(ConfigError::Invalid("vector.k must be at least 1".into()));
        }
        if self.contracts.aggregate_min > self.contracts.aggregate_max {
            return Err(ConfigError::Invalid("contracts.aggregate_min exceeds aggregate_max".into()));
        }
        if self.executor.morsel_size == 0 {
            return Err(ConfigError::Invalid("executor.morsel_size must be at least 1".into()));
        }
        for (name, c) in [("c_prefill", self.planner.c_prefill), ("c_decode", self.planner.c_decode), ("epsilon", self.planner.epsilon)] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(ConfigError::Invalid(format!("planner.{name} must be a non-negative number")));
            }
        }
        self.vector.rag_target()?;
        Ok(())
    }

    /// Mock settings with the engine seed and vector dimension applied.
    pub fn effective_mock(&self) -> MockConfig {
        MockConfig { seed: self.seed, embedding_dim: self.vector.dim, ..self.mock.clone() }
    }

    pub fn bind_options(&self) -> Result<BindOptions, ConfigError> {
        Ok(BindOptions {
            contracts: ContractDefaults {
                predicate_complement: self.contracts.predicate_complement.clone(),
                aggregate_range: (self.contracts.aggregate_min, self.contracts.aggregate_max),
            },
            rag_index: self.vector.rag_target()?,
            default_k: self.vector.k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(EngineConfig::from_toml_str("").unwrap(), EngineConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = EngineConfig::default();
        cfg.scheduler.window = 3;
        cfg.vector.rag_index = Some("squad.context".into());
        cfg.vector.strategy = StrategyKind::Graph;
        let back = EngineConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(
            back.bind_options().unwrap().rag_index,
            Some(IndexTarget { table: "squad".into(), column: "context".into() })
        );
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = EngineConfig::from_toml_str(
            "seed = 9\n[scheduler]\nwindow = 2\nmax_retries = 5\n[planner]\nc_decode = 4.0\n[mock]\nmode = { mode = \"noisy\", p = 0.3 }\n",
        )
        .unwrap();
        assert_eq!(cfg.scheduler.window, 2);
        assert_eq!(cfg.scheduler.max_retries, 5);
        assert_eq!(cfg.planner.c_decode, 4.0);
        assert_eq!(cfg.effective_mock().seed, 9);
        assert_eq!(cfg.effective_mock().mode, crate::llm::MockMode::Noisy(0.3));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::from_toml_str("[scheduler]\nwindow = 0\n").is_err());
        assert!(EngineConfig::from_toml_str("[vector]\nrag_index = \"squad\"\n").is_err());
        assert!(EngineConfig::from_toml_str("[backend]\nkind = \"openai_compatible_http\"\n").is_err());
        assert!(EngineConfig::from_toml_str("[planner]\nc_prefill = -1.0\n").is_err());
        assert!(EngineConfig::from_toml_str("[nonsense\n").is_err());
    }
}
