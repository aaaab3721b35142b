use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("tubes overlap: {0}")]
    Overlap(String),
    #[error("truncation radius {r} is below r0 = {r0}")]
    TruncationTooShort { r: f64, r0: f64 },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("eigensolver stagnated: {0}")]
    Stagnation(String),
    #[error("rank deficient block: {0}")]
    RankDeficient(String),
    #[error("not applicable: {0}")]
    Inapplicable(String),
    #[error("extrapolation failed: {0}")]
    Extrapolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
