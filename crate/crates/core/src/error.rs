//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by the geometric kernels and the scenario harness.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Argument outside the validity domain of a profile function or stencil.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector that must be α-unit is not.
    #[error("vector is not α-unit: |α(y) - 1| = {0:.3e}")]
    NotUnitVector(f64),

    /// Two closed forms of the same quantity disagree beyond tolerance.
    #[error("form mismatch in {what}: relative gap {gap:.3e}")]
    FormMismatch { what: &'static str, gap: f64 },

    /// Root bracketing exhausted without a sign change.
    #[error("no root of the normal fixed-point equation in the admissible bracket ({0})")]
    NoRoot(String),

    /// An admissibility condition fails; the margin names the condition.
    #[error("condition violated: {margin} = {value:.3e} at {site}")]
    ConditionViolated {
        margin: &'static str,
        value: f64,
        site: String,
    },

    /// Newton iteration failed to converge.
    #[error("no convergence after {0} iterations (residual {1:.3e})")]
    NoConvergence(usize, f64),

    /// A vector that must be tangent to the hyperplane is not.
    #[error("vector not tangential: <u, N> = {0:.3e}")]
    NotTangential(f64),

    /// Metric (or derived metric) not invertible / not positive definite.
    #[error("singular metric: {0}")]
    SingularMetric(String),

    /// Constant-case formula requested on a geometry with varying b or β(N).
    #[error("not the constant case: {field} varies by {spread:.3e} over the grid")]
    NotConstantCase { field: &'static str, spread: f64 },

    /// A family-specific formula was applied to the wrong family.
    #[error("wrong family: expected {expected}, got {got}")]
    WrongFamily { expected: &'static str, got: String },

    /// An explicit hypothesis of a corollary fails.
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    /// Invalid scenario configuration.
    #[error("config error: {0}")]
    Config(String),
}
