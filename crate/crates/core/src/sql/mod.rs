//! SQL front end: lexer, parser, binder and output-contract inference.

pub mod ast;
mod binder;
mod contract;
mod lexer;
mod parser;

use thiserror::Error;

pub use binder::{
    bind, BindError, BindOptions, BoundConjunct, BoundJoin, BoundQuery, BoundSelect, BoundTable, ColumnId,
    IndexTarget, InvocationSite, LlmArg, LlmInvocation, Operand,
};
pub use contract::{
    infer_contract, ContractContext, ContractDefaults, OutputContract, SchemaField, SchemaFieldType, Template,
};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at line {line}, column {column}: expected {expected}, found `{found}`")]
    Syntax { line: u32, column: u32, expected: String, found: String },
    #[error("unsupported feature at line {line}, column {column}: {feature} (token `{token}`)")]
    Unsupported { line: u32, column: u32, token: String, feature: String },
}

impl SqlError {
    pub(crate) fn syntax(line: u32, column: u32, expected: &str, found: &str) -> SqlError {
        SqlError::Syntax { line, column, expected: expected.to_string(), found: found.to_string() }
    }

    pub fn position(&self) -> (u32, u32) {
        match self {
            SqlError::Syntax { line, column, .. } | SqlError::Unsupported { line, column, .. } => (*line, *column),
        }
    }
}
