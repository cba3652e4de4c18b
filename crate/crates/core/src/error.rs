use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("degree error: {0}")]
    Degree(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("line search failed at step {step} after {halvings} halvings (energy {energy:e})")]
    Flow {
        step: usize,
        halvings: usize,
        energy: f64,
    },
    #[error("degenerate immersion at point {point}: min metric eigenvalue {min_eigenvalue:e}")]
    Degenerate { point: usize, min_eigenvalue: f64 },
    #[error("frame error at point {point}: {reason}")]
    Frame { point: usize, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
