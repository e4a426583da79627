//! The delegation-criteria language: ordered routing rules over case, context,
//! QC and AI fields.
//!
//! A policy is parsed once ([`parse_policy`]), checked against the scenario
//! schema ([`validate_policy`]) and then evaluated per case with Kleene
//! three-valued logic ([`evaluate_expr`]). [`format_policy`] prints the
//! canonical form; `parse_policy(&format_policy(&p)) == p` for every policy.

mod ast;
mod eval;
mod format;
mod lexer;
mod parser;
mod validate;

use std::fmt;

use thiserror::Error;

pub use ast::{CmpOp, Expr, FieldPath, Literal, Policy, Rule, Span};
pub use eval::{and, evaluate, evaluate_expr, not, or, CaseView, EvalError, FieldRef, FieldSource};
pub use format::{format_expr, format_policy};
pub use lexer::KEYWORDS;
pub use parser::parse_policy;
pub use validate::{normalize_condition, validate_policy, DiagnosticKind, PolicyDiagnostic};

/// Syntax error: position, the set of tokens that would have been accepted,
/// and what was found instead.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        if self.expected.is_empty() {
            f.write_str(&self.found)
        } else {
            write!(f, "expected {}, found {}", self.expected.join(" or "), self.found)
        }
    }
}
