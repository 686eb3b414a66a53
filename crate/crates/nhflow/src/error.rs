//! Error type shared by all modules of the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by construction, evaluation and verification routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid index: {0}")]
    Index(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("subalgebra chain is not orthogonally nested: {0}")]
    Chain(String),

    #[error("operation not applicable: {0}")]
    Applicability(String),

    #[error("degenerate constraint system: {0}")]
    DegenerateConstraint(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("measure density invalid: {0}")]
    Measure(String),

    #[error("orthogonal projection failed: {0}")]
    ProjectionFailure(String),

    #[error("state violates invariants: {0}")]
    State(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular potential term: {0}")]
    Singularity(String),

    #[error("trajectory too close to a branch point: {0}")]
    Branch(String),

    #[error("point on a coordinate hyperplane: {0}")]
    Boundary(String),

    #[error("constant fit failed: {0}")]
    Fit(String),

    #[error("non-generic data: {0}")]
    NonGenericData(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("monitor '{monitor}' exceeded 10x tolerance at t = {time}: drift {drift:.3e} > {limit:.3e}")]
    Integrity {
        monitor: String,
        time: f64,
        drift: f64,
        limit: f64,
    },

    #[error("reparameterization rate not positive: {0}")]
    Rate(String),

    #[error("orbit radius collapsed: {0}")]
    DegenerateOrbit(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),
}
