//! Error type shared by every module.
//!
//! Variants fall in two families. [`AmoError::InvalidInput`] covers bad user
//! input and maps to CLI exit code 2. Everything else is a numerical or
//! invariant failure and maps to exit code 1.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AmoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polynomial λ-degree {degree} exceeds duality degree {bound}")]
    DegreeOverflow { degree: u32, bound: u32 },

    #[error("Chambers interpolation is ill-conditioned for q = {q}, λ = {lambda}: relative mismatch {mismatch:.3e}")]
    InterpolationConditioning { q: u64, lambda: f64, mismatch: f64 },

    #[error("symmetric eigensolver failed for a {dim}×{dim} matrix: {detail}")]
    EigenNonConvergence { dim: usize, detail: String },

    #[error("root-count mismatch for q = {q}, λ = {lambda}: expected {expected}, found {found}")]
    RootCountMismatch {
        q: u64,
        lambda: f64,
        expected: usize,
        found: usize,
    },

    #[error("eigenvalue interlacing violated: {0}")]
    InterlacingViolation(String),

    #[error("independent routes disagree: {0}")]
    RouteDisagreement(String),

    #[error("banded window of radius {window} is too small for power {power}")]
    WindowTooSmall { window: usize, power: usize },

    #[error("odd power of cos πα survived the reduction at k = {k}")]
    OddPowerSurvived { k: u32 },

    #[error("spectral parameter too close to the spectrum: distance {distance:.3e} < {minimum:.3e}")]
    TooCloseToSpectrum { distance: f64, minimum: f64 },

    #[error("resolvent residual {residual:.3e} exceeds tolerance on window radius {window}")]
    ResidualFailure { residual: f64, window: usize },

    #[error("contour quadrature did not converge: doubling changed entries by {change:.3e}")]
    QuadratureNonConvergence { change: f64 },

    #[error("trace tail bound {tail:.3e} not reached within window radius {window}")]
    TailBoundNotAchieved { tail: f64, window: usize },

    #[error("exact division left a nonzero remainder: {0}")]
    InexactDivision(String),

    #[error("degenerate root of Q_1 at E = {energy}: |Q'| = {derivative:.3e}")]
    DegenerateRoot { energy: f64, derivative: f64 },

    #[error("energy {energy} lies inside the union spectrum")]
    EndpointInSpectrum { energy: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl AmoError {
    /// Process exit code for the CLI: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AmoError::InvalidInput(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for AmoError {
    fn from(e: std::io::Error) -> Self {
        AmoError::Io(e.to_string())
    }
}
