//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the exit codes used by the command-line harness:
/// validation problems exit with 1, numeric failures with 2 and
/// resonance/eigenvalue proximity with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the admissible parameter domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid input (mismatched sizes, non-tangential traces, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Broken mesh (degenerate triangle, open surface, ...).
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Evaluation requested on or too close to a material interface.
    #[error("interface error: {0}")]
    Interface(String),

    /// Numerical failure (singular kernel evaluation, LAPACK breakdown, overflow).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The requested frequency sits on (or within tolerance of) an interior
    /// Maxwell eigenvalue, or a modal transfer matrix is singular.
    #[error("resonance error: {0}")]
    Resonance(String),

    /// Ill-conditioned linear system; for the exterior solvers this is the
    /// signature of leaving the small-obstacle regime.
    #[error("solver error: {0}")]
    Solver(String),

    /// Problem size exceeds the configured memory budget.
    #[error("resource error: {0}")]
    Resource(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI reports for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Mesh(_) | Error::Config(_) => 1,
            Error::Resonance(_) => 3,
            _ => 2,
        }
    }
}
