//! Policy language front end: parsing, printing, sugar expansion and
//! normalization.

pub mod ast;
mod desugar;
mod normalize;
pub mod parser;
mod printer;

use thiserror::Error;

use crate::rate::RateError;

pub use ast::*;
pub use desugar::desugar;
pub use normalize::{catch_all_predicate, is_synthesized_catch_all, normalize};
pub use printer::{print_formula, print_path, print_policy, print_predicate};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: unknown header field `{name}`")]
    UnknownField { line: usize, col: usize, name: String },
    #[error("{line}:{col}: value `{value}` is not valid for field {field}")]
    BadValue {
        line: usize,
        col: usize,
        field: String,
        value: String,
    },
    #[error("{line}:{col}: {source}")]
    Rate {
        line: usize,
        col: usize,
        source: RateError,
    },
    #[error("statement identifier `{0}` is defined more than once")]
    DuplicateStatement(String),
    #[error("formula refers to unknown statement `{0}`")]
    UnknownIdentifier(String),
    #[error("set `{0}` is defined more than once")]
    DuplicateSet(String),
    #[error("unknown set `{0}`")]
    UnknownSet(String),
    #[error("set `{0}` is empty")]
    EmptySet(String),
    #[error("expanded statement identifier `{0}` collides with an existing statement")]
    IdCollision(String),
    #[error("statements `{first}` and `{second}` overlap, e.g. on packet {witness}")]
    Overlap {
        first: String,
        second: String,
        witness: String,
    },
    #[error("statement `{0}` uses a payload predicate, which no analysis supports")]
    PayloadUnsupported(String),
}

/// Parses policy text, expanding sugar. The result is not normalized.
pub fn parse(source: &str) -> Result<Policy, PolicyError> {
    desugar(parser::parse_program(source)?)
}

/// Parses and normalizes policy text.
pub fn load(source: &str) -> Result<Policy, PolicyError> {
    normalize(&parse(source)?)
}

/// Checks identifier uniqueness and formula references.
pub fn validate(policy: &Policy) -> Result<(), PolicyError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in &policy.statements {
        if !seen.insert(s.id.as_str()) {
            return Err(PolicyError::DuplicateStatement(s.id.clone()));
        }
    }
    for id in policy.formula.identifiers() {
        if !seen.contains(id) {
            return Err(PolicyError::UnknownIdentifier(id.to_string()));
        }
    }
    Ok(())
}
