//! Error type shared by the solver core.

use thiserror::Error;

/// Errors produced by core operations.
///
/// `Validation` covers parameter admissibility, `Contract` covers misuse of
/// an operation (wrong representation, mismatched grids), `Domain` covers
/// out-of-range scalar arguments, and the remaining variants carry runtime
/// failures of the iterative pieces.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Model or grid parameters violate an admissibility bound.
    #[error("validation: {0}")]
    Validation(String),

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A scalar argument lies outside the operation's domain.
    #[error("domain: {0}")]
    Domain(String),

    /// Fixed-point iteration failed to converge.
    #[error("ground-state iteration failed: {reason} after {iterations} iterations")]
    Convergence {
        reason: String,
        iterations: usize,
        /// Relative-change history of the iterates, for post-mortems.
        history: Vec<f64>,
    },

    /// The time integrator produced a non-finite state.
    #[error("numerical failure at t = {time}: {reason}")]
    Numerical { time: f64, reason: String },

    /// A quadrature did not meet its tail or refinement tolerance.
    #[error("quadrature: {0}")]
    Quadrature(String),

    /// A trajectory does not carry enough snapshots for the requested monitor.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The requested monitor does not apply to this trajectory outcome.
    #[error("not applicable: {0}")]
    NotApplicable(String),
}
