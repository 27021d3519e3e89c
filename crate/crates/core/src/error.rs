//! Crate-wide error types.

use thiserror::Error;

/// Errors produced while building or validating experiment inputs.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// A scenario invariant does not hold; the message names the constraint.
    #[error("invalid configuration: {0}")]
    Invariant(String),
    /// A requested preset/override combination cannot be represented.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

/// Errors from geometry sampling.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("could not place {kind} {index} after {attempts} rejections (minimum link distance {d_min} m)")]
    PlacementRejected {
        kind: &'static str,
        index: usize,
        attempts: usize,
        d_min: f64,
    },
}

/// Errors from numerical kernels (domain violations, broken inputs).
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

/// Errors from the max-min power-control solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("bisection exceeded {max_iters} iterations (bracket [{low}, {high}])")]
    IterationLimit {
        max_iters: usize,
        low: f64,
        high: f64,
    },
    #[error("solver invariant violated: {0}")]
    Invariant(String),
}

/// Top-level error for experiment runs and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
