use thiserror::Error;

/// Errors surfaced by the solvers and model constructors.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "quadrature did not reach tolerance {tolerance:e}: estimate {estimate}, error bound {error:e}"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error(
        "fixed-point solver stopped after {iterations} iterations with residual {residual:e} (tolerance {tolerance:e})"
    )]
    Convergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        iterate: Vec<f64>,
    },

    #[error("root bracket [{lo}, {hi}] does not straddle zero: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("utility does not satisfy the gradient scale condition required by the leasing layer")]
    ScaleCondition,

    #[error("gradient of a linear utility is constant and has no inverse; use the cap rule")]
    NoGradientInverse,
}

pub type Result<T> = std::result::Result<T, Error>;
