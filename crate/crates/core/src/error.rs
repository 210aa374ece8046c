use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An index or dimension violated the contract of the operation.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model, machine or policy failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A probability row did not sum to one.
    #[error("row {row} sums to {sum} (expected 1)")]
    Normalization { row: String, sum: f64 },

    /// Text input could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The input uses a construct the reader does not support.
    #[error("unsupported construct: {0}")]
    Unsupported(String),

    /// A computation would exceed a configured size cap.
    #[error("capacity exceeded: {what} needs {needed}, cap is {cap}{}", hint_suffix(.hint))]
    Capacity {
        what: String,
        needed: u128,
        cap: u128,
        hint: Option<String>,
    },

    /// Bayes update conditioned on an observation of probability zero.
    #[error("observation {obs} has zero probability under action {action}")]
    ImpossibleObservation { obs: usize, action: usize },

    /// More than one closed communicating class is reachable.
    #[error("stationary distribution is ambiguous: {} closed classes reachable", .0.len())]
    AmbiguousStationary(Vec<Vec<usize>>),

    /// A (z, a) pair has zero stationary mass.
    #[error("agent state {z}, action {a} is never visited under the behavior policy")]
    ZeroVisit { z: usize, a: usize },
}

fn hint_suffix(hint: &Option<String>) -> String {
    match hint {
        Some(h) => format!(" ({h})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn capacity(what: impl Into<String>, needed: u128, cap: u128) -> Self {
        Error::Capacity {
            what: what.into(),
            needed,
            cap,
            hint: None,
        }
    }

    /// True for errors caused by size caps rather than bad input.
    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
