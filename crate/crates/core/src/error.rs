//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter ranges, unknown keys, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Serving-group construction failed (not enough neighbors, ...).
    #[error("serving group error: {0}")]
    Group(String),

    /// Candidate position coincides with a satellite or sits on the
    /// satellite's vertical axis, making angles or their derivatives
    /// undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The angle-to-position Jacobian is singular for this scene.
    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),

    /// Invalid argument to a numerical routine.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The probing signal `Vs + r` is identically zero, so the fitness
    /// and the reflection-coefficient MLE are undefined.
    #[error("degenerate signal: probing vector Vs + r is zero")]
    DegenerateSignal,

    /// A lattice or workload exceeds the configured resource limit.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// The nuisance information F_alpha_alpha vanishes, so the reduced
    /// Fisher matrix is undefined.
    #[error("singular nuisance information (F_aa = 0)")]
    SingularNuisance,

    /// J^T F J is singular; the target position is unobservable for this
    /// geometry.
    #[error("unobservable geometry: {0}")]
    UnobservableGeometry(String),

    /// The optimization instance is infeasible.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    /// The conic solver failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The zero-forcing baseline is unavailable (rank-deficient channels).
    #[error("baseline unavailable: {0}")]
    BaselineUnavailable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
