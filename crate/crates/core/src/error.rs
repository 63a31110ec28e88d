use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by element {element}")]
    NumericFailure { element: usize },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e}): {reason}")]
    SolverFailure {
        reason: String,
        iterations: usize,
        residual: f64,
    },

    #[error("Newton iteration did not converge ({reason}); residual history {history:?}")]
    NonConvergence { reason: String, history: Vec<f64> },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        Error::Step {
            step,
            source: Box::new(source),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical solve (as opposed to bad input or I/O).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NumericFailure { .. }
            | Error::SolverFailure { .. }
            | Error::NonConvergence { .. } => true,
            Error::Step { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
