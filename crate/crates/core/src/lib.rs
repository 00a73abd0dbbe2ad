//! Relational query engine whose SQL dialect can call a language model in
//! projections, predicates, aggregates and retrieval-augmented generation.

pub mod catalog;
pub mod config;
pub mod engine;
pub mod executor;
pub mod fixtures;
pub mod llm;
pub mod planner;
pub mod scheduler;
pub mod sql;
pub mod suite;
pub mod value;
pub mod vector;

pub use catalog::{Catalog, CatalogError, Column, ColumnStats, Schema, Table};
pub use config::{ConfigError, EngineConfig};
pub use engine::{Engine, EngineError, Prepared};
pub use executor::{ExecError, ExecOptions, OutputFormat, QueryResult};
pub use llm::{Backend, BackendDescriptor, MockBackend, MockConfig, MockMode};
pub use planner::{explain, LogicalPlan, PlannerConfig};
pub use scheduler::{MetricsReport, SchedulerConfig};
pub use value::{DataType, Row, Value};
