use std::path::PathBuf;

use thiserror::Error;

use crate::netmodel::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{entity} references unknown {target} {id}")]
    Reference {
        entity: String,
        target: &'static str,
        id: usize,
    },

    #[error("invalid case: {}", format_diagnostics(.0))]
    Invariant(Vec<Diagnostic>),

    #[error("{what} = {value} outside [{min}, {max}]")]
    Bounds {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded or malformed bids: {0}")]
    Unbounded(String),

    #[error("no convergence after {iterations} iterations (mismatch {mismatch:.3e})")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("missing {0}")]
    Missing(String),

    #[error("scenario {index} failed: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
