use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong while building, certifying, bounding or simulating a scenario.
///
/// Variants that describe a failed inequality carry the signed margin so callers (bisection,
/// the CLI) can act on how far from feasible a configuration is.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{field}: dimension mismatch (expected {expected}, found {found})")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{field}: matrix is not square ({rows}x{cols})")]
    NotSquare {
        field: String,
        rows: usize,
        cols: usize,
    },
    #[error("{field}: matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { field: String, asymmetry: f64 },
    #[error(
        "{field}: K not positive definite (smallest eigenvalue of symmetric part {min_eig:e})"
    )]
    NotPositiveDefinite { field: String, min_eig: f64 },
    #[error("{field}: sampled supremum {sampled:e} exceeds declared bound {declared:e}")]
    BoundViolated {
        field: String,
        sampled: f64,
        declared: f64,
    },
    #[error("PE fails: smallest eigenvalue of the windowed average of B B^T is {min_eig:e}")]
    PeFails { min_eig: f64 },
    #[error("infeasible: {what} (signed margin {margin:e})")]
    Infeasible { what: String, margin: f64 },
    #[error("certificate rejected: {what} at t = {t:e} (margin {margin:e})")]
    CertificateRejected { what: String, t: f64, margin: f64 },
    #[error("no feasible value in bracket [{lo:e}, {hi:e}]")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn infeasible(what: impl Into<String>, margin: f64) -> Self {
        Error::Infeasible {
            what: what.into(),
            margin,
        }
    }
}
