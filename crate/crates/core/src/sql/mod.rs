//! The SQL subset: parsing, rendering, column extraction and in-memory
//! execution.
//!
//! Supported: one `SELECT [DISTINCT]` with `[INNER] JOIN ... ON`, `WHERE`
//! (comparisons, `AND`/`OR`/`NOT`, `IN` lists, one level of uncorrelated
//! `IN (SELECT ...)`, `LIKE`, `BETWEEN`, `IS [NOT] NULL`), `GROUP BY`,
//! `HAVING`, `COUNT/SUM/AVG/MIN/MAX`, `ORDER BY` and `LIMIT`.
//!
//! Comparisons involving NULL evaluate to false; `NOT` negates that result.

mod ast;
mod bind;
mod eval;
mod lexer;
mod parser;
mod render;
mod value;

use alloc::string::String;

use thiserror::Error;

pub use ast::*;
pub use bind::columns_used;
pub use eval::{execute, execution_match, results_equal, Database, ResultTable, TableData};
pub use parser::parse_sql;
pub use render::{quote_ident, render, render_expr, render_with, RenderStyle};
pub use value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { message: String, offset: usize },
    #[error("unsupported SQL feature: {0}")]
    UnsupportedFeature(String),
    #[error("unresolved identifier: {0}")]
    UnresolvedIdentifier(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid database: {0}")]
    InvalidDatabase(String),
    #[error("gold query is invalid: {0}")]
    GoldQueryInvalid(String),
}

impl SqlError {
    pub(crate) fn syntax(message: impl Into<String>, offset: usize) -> Self {
        SqlError::Syntax { message: message.into(), offset }
    }

    pub(crate) fn unsupported(feature: impl Into<String>) -> Self {
        SqlError::UnsupportedFeature(feature.into())
    }

    pub(crate) fn mismatch(what: impl Into<String>) -> Self {
        SqlError::TypeMismatch(what.into())
    }
}
