use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The symmetric factorization hit a non-positive pivot, even after jitter.
    #[error("similarity matrix is not numerically positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("at scale t = {t}: {source}")]
    AtScale {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    /// `1 - ζᵀZ⁻¹ζ` came out negative beyond the guard, so `Z[ζ]` is not PD in
    /// floating point.
    #[error("Schur complement {0:e} is negative beyond tolerance")]
    NegativeSchurComplement(f64),

    #[error("cannot extend weighting: Schur complement {0:e} is below the guard")]
    DegenerateExtension(f64),

    #[error("conjugate gradient breakdown at iteration {iteration} (curvature {curvature:e})")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("surrogate is not differentiable at a node")]
    NonDifferentiable,
}

pub type Result<T> = std::result::Result<T, Error>;
