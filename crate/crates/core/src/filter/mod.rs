//! Row-predicate expression language.
//!
//! Predicates are the row-filter programs applied to tables. The language is
//! deliberately closed: literals, column access, `not`/`and`/`or`,
//! comparisons, substring `in`, and the three functions `lower`, `float` and
//! `len`. There is no assignment, iteration or host access, so evaluation
//! can only observe the row it is given.

mod ast;
mod eval;
pub mod fuzz;
mod lexer;
mod parser;
mod render;
mod sql;

use std::fmt;

pub use ast::{CmpOp, Expr, Func};
pub use eval::{
    eval_predicate, eval_predicate_counted, eval_value, parse_float_strict, EvalError, EvalLimits,
    RowBinding, Value, MAX_EVAL_DEPTH,
};
pub use parser::{parse_predicate, MAX_NESTING, MAX_TOKENS};
pub use render::render_predicate;
pub use sql::{translate_sql_where, ColumnMap, TranslateError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset of the offending token.
    pub position: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub(crate) fn new(position: usize, message: impl Into<String>, expected: Vec<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
            expected,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.position)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

// Predicates travel through caches and reports as canonical source text.
impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&render_predicate(self))
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_predicate(&text).map_err(serde::de::Error::custom)
    }
}
