use std::path::PathBuf;

use crate::ot::Coupling;

pub type Result<T, E = PotError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum PotError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no points")]
    NoPoints,

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: unsupported format: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:.3e})")]
    NotConverged {
        iterations: usize,
        violation: f64,
        /// Best plan found so far; still usable as an approximate coupling.
        best: Box<Coupling>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("weighted design is rank deficient; use ridge > 0")]
    RankDeficient,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
