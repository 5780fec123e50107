//! Error type shared across the pipeline stages.

use thiserror::Error;

/// Errors raised by geometry, density, solver and mechanism operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or tangent vector failed its manifold invariant.
    #[error("invalid {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A point belongs to a different manifold than the `ManifoldSpec` describes.
    #[error("manifold mismatch: expected {expected}, got {got}")]
    ManifoldMismatch {
        expected: &'static str,
        got: &'static str,
    },

    /// Logarithm map requested at (or numerically at) the cut locus.
    #[error("log map undefined at the cut locus (antipodal points)")]
    CutLocus,

    /// Dataset ball exceeds the radius bound r* required by the
    /// curvature-aware sensitivity formula.
    #[error("geodesic ball radius {radius} exceeds the admissible bound r* = {r_star}")]
    BallTooLarge { radius: f64, r_star: f64 },

    /// Kernel bandwidth violates h < inj(M)/2.
    #[error("bandwidth {bandwidth} must be below half the injectivity radius ({limit})")]
    BandwidthTooLarge { bandwidth: f64, limit: f64 },

    /// Sanitize called twice on the same density field.
    #[error("density field is already sanitized")]
    AlreadySanitized,

    /// A stage that consumes sanitized input received a raw field.
    #[error("density field must be sanitized before this operation")]
    NotSanitized,

    /// Privacy budget must be strictly positive.
    #[error("privacy budget must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    /// Ledger calibration received a nonpositive budget.
    #[error("nonpositive budget: {0}")]
    NonpositiveBudget(f64),

    /// k-NN graph is not a single connected component.
    #[error("graph is disconnected ({components} components); increase k")]
    DisconnectedGraph { components: usize },

    /// Conjugate gradient failed to reach the residual target.
    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual})")]
    CgDivergence { iterations: usize, residual: f64 },

    /// Rejection sampler exceeded its iteration cap.
    #[error("rejection sampler exceeded {0} iterations")]
    RejectionCap(usize),

    /// Covariance descriptor produced NaN entries.
    #[error("degenerate image: covariance contains non-finite entries")]
    DegenerateImage,

    /// Generic invalid-argument error.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
