//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} overflowed at term {term}")]
    Overflow { what: &'static str, term: usize },
    #[error("theta series does not converge: {0}")]
    ThetaDivergence(String),
    #[error("series truncation failed: tail estimate {tail:.3e} exceeds {tol:.3e}")]
    Truncation { tail: f64, tol: f64 },
    #[error("density matrix trace deficit {deficit:.3e} exceeds {tol:.3e}")]
    TraceDeficit { deficit: f64, tol: f64 },
    #[error("eigenvalue weight {value:.6e} outside [0, 1/2] beyond tolerance")]
    EigenvalueRange { value: f64 },
    #[error("grid normalization defect {defect:.3e} exceeds {tol:.3e}")]
    Normalization { defect: f64, tol: f64 },
    #[error("root not bracketed on ({lo:.3e}, {hi:.3e})")]
    Bracket { lo: f64, hi: f64 },
    #[error("smoothing window invalid: {0}")]
    Window(String),
    #[error("scan extremum sits on the boundary (index {0})")]
    BoundaryExtremum(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
