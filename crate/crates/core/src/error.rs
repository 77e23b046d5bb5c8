use thiserror::Error;

use crate::objective::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph: {0}")]
    Graph(String),

    #[error("graph line {line}: {msg}")]
    GraphSyntax { line: usize, msg: String },

    #[error("invalid solution spec: {0}")]
    Spec(String),

    #[error("strategy file: {0}")]
    Strategy(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("objective: {0}")]
    Objective(String),

    #[error("configuration space has {states} states, limit is {limit}")]
    TooManyStates { states: usize, limit: usize },

    #[error("no BSCC covers every atom: {}", format_uncovered(.0))]
    Uncoverable(Vec<(String, usize)>),

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("search space of {candidates} candidates exceeds limit {limit}")]
    SearchLimit { candidates: f64, limit: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_uncovered(pairs: &[(String, usize)]) -> String {
    pairs
        .iter()
        .map(|(atom, b)| format!("{atom} in BSCC {b}"))
        .collect::<Vec<_>>()
        .join(", ")
}
