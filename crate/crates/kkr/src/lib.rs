//! Koopman kernel regression (KKR).
//!
//! Learns linear-time-invariant (LTI) predictors of nonlinear dynamical
//! systems from trajectory data. The estimator performs regularized least
//! squares in a trajectory-space reproducing kernel Hilbert space whose
//! members evolve linearly in time by construction: every feature is a
//! Koopman eigenfunction candidate for a sampled discrete-time eigenvalue
//! `mu` on the closed unit disk. Forecasting a fitted model only requires
//! powers of a diagonal matrix.
//!
//! The crate ships:
//!
//! * [`dynamics`] — benchmark ODEs (bi-stable, Van der Pol), a fixed-step
//!   RK4 integrator, dataset sampling and CSV (de)serialization,
//! * [`spectra`] — samplers for discrete-time eigenvalue sets and the
//!   stabilized pullback-weight vectors they induce,
//! * [`kernel`] — base/eigenfunction/Koopman kernels and block Gram
//!   assembly with a shared base-kernel cache,
//! * [`model`] — the KKR estimator: fit, eigenfunction evaluation and LTI
//!   rollout forecasts,
//! * [`edmd`] — a kernel EDMD baseline via principal component regression
//!   on one-step snapshot pairs,
//! * [`experiments`] — risk estimation, seeded benchmark sweeps, log-log
//!   rate fits and the kernel Monte-Carlo convergence study,
//! * [`config`] — the JSON run configuration consumed by the `kkr` CLI.


pub mod config;
pub mod dynamics;
pub mod edmd;
pub mod experiments;


pub mod kernel;
pub mod linalg;
pub mod model;
pub mod spectra;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A state, weight or kernel value left the finite range.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Operands disagree on a dimension (state dim, horizon, ...).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A CSV field could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A file's structure does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// The regularized Gram system could not be solved reliably.
    #[error("singular Gram matrix: {0}")]
    SingularGram(String),

    /// Overflow in the unnormalized eigenfunction kernel for |mu| << 1.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Invalid run configuration or parameters.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A conjugate-closed spectrum was required but not provided.
    #[error("spectrum is not conjugate-closed but the configuration requires it")]
    NotConjugateClosed,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
