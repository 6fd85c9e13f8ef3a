//! Restricted arithmetic language evaluated by the calculator agent.
//!
//! The alphabet is digits, `.`, `+`, `-`, `*`, `/`, `(` and `)`. There are
//! no identifiers, functions or exponentiation, so evaluating an extracted
//! equation can never run anything but arithmetic.

mod ast;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{evaluate, BinaryOp, Expr};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse, Expected, MAX_NESTING};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at position {position}")]
    Lex { position: usize, ch: char },
    #[error("expected {expected} at position {position}")]
    Parse { position: usize, expected: Expected },
    #[error("nesting deeper than {MAX_NESTING} at position {position}")]
    TooDeep { position: usize },
    #[error("division by zero in `{subexpression}`")]
    DivisionByZero { subexpression: String },
    #[error("non-finite result in `{subexpression}`")]
    Overflow { subexpression: String },
    #[error("invalid number literal {0:?}")]
    InvalidNumber(String),
}

/// Failure to evaluate an equation chain, tagged with the `=`-separated
/// segment it came from. Only the leftmost segment is ever evaluated, so
/// `segment` is currently always 0.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ChainError {
    #[error("equation is empty after normalization")]
    Empty,
    #[error("segment {segment}: {source}")]
    Segment { segment: usize, source: ExprError },
}

/// Removes whitespace, thousands separators, `%` and currency symbols.
pub fn normalize_equation(raw: &str) -> String {
    raw.chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, ',' | '%' | '$' | '€' | '£'))
        .collect()
}

/// Normalizes, lexes, parses and evaluates a single expression.
pub fn eval_str(src: &str) -> Result<f64, ExprError> {
    parse(&tokenize(src)?)?.evaluate()
}

/// An extracted equation such as `(6077+1379)/2=7456/2=3728`.
///
/// Only the leftmost segment is authoritative; claimed results to the right
/// of any `=` are kept for reference and never trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationChain {
    pub raw: String,
    pub segments: Vec<String>,
    pub head: Expr,
    pub value: f64,
}

impl EquationChain {
    /// The recomputed calculation in `expr=value` form.
    pub fn corrected(&self) -> String {
        format!("{}={}", self.segments[0], format_value(self.value))
    }
}

impl fmt::Display for EquationChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {}", self.segments[0], format_value(self.value))
    }
}

pub fn eval_equation_chain(raw: &str) -> Result<EquationChain, ChainError> {
    let normalized = normalize_equation(raw);
    if normalized.is_empty() {
        return Err(ChainError::Empty);
    }
    let segments: Vec<String> = normalized.split('=').map(str::to_owned).collect();
    let tag = |source| ChainError::Segment { segment: 0, source };
    let head = parse(&tokenize(&segments[0]).map_err(tag)?).map_err(tag)?;
    let value = head.evaluate().map_err(tag)?;
    Ok(EquationChain {
        raw: raw.to_owned(),
        segments,
        head,
        value,
    })
}

/// Shortest decimal text that parses back to the same double.
pub fn format_value(value: f64) -> String {
    // Display for f64 is round-trip exact and never uses exponent notation.
    format!("{value}")
}
