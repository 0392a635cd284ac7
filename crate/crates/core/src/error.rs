use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrator could not meet tolerance at x0 = {x0}: {reason}")]
    StepFailure { x0: f64, reason: String },

    #[error("characteristic through rho = {rho}, x0 = {x0} leaves the domain before reaching x0 = 0")]
    Capture { rho: f64, x0: f64 },

    #[error("separatrix bracket [{lo}, {hi}] does not straddle the horizon: both ends classify as {class}")]
    Bracket { lo: f64, hi: f64, class: String },

    #[error("quadrature did not converge: estimated error {error:e} above target {target:e} after {intervals} intervals")]
    QuadratureNotConverged {
        error: f64,
        target: f64,
        intervals: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("instability detected at x0 = {x0}: norm grew by factor {factor:.3} in one step")]
    Instability { x0: f64, factor: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
