//! Damped value iteration for finite discounted MDPs, instrumented for
//! weighted-L2 convergence analysis.
//!
//! The iteration `V_{t+1} = (1-alpha) V_t + alpha T(V_t)` (with `T` the Bellman
//! optimality backup) contracts the error `e_t = V_t - V*` through a sequence of
//! row-stochastic matrices `M_t`: each step satisfies `e_{t+1} = gamma_alpha M_t e_t`
//! exactly, where `gamma_alpha = (1-alpha) + alpha*gamma`. This crate reconstructs
//! those matrices from a traced run, builds an absolute probability sequence
//! `{p_t}` for them by backward recursion, decomposes the error into a consensus
//! coefficient plus a weighted-mean-zero remainder, and verifies the per-step decay
//!
//! ```text
//! ||delta_{t+1}||^2_{p_{t+1}} = gamma_alpha^2 (1 - R_t) ||delta_t||^2_{p_t}
//! ```
//!
//! together with the spectral lower bounds on the gain `R_t` (a generalized
//! Rayleigh quotient of a Laplacian built from `M_t`).
//!
//! Modules follow the pipeline order: [`numerics`] (dense linear algebra),
//! [`mdp`] (model, Bellman machinery, exact optimum by enumeration),
//! [`generators`] (seeded random models), [`vi`] (the traced iteration),
//! [`aps`] (probability sequence and decay verification), [`spectral`]
//! (Laplacian and eigenvalue bounds), [`report`] (CSV/JSON artifacts), and
//! [`suite`] (the seeded verification battery behind `vi-spectral verify`).

use thiserror::Error;

pub mod aps;
pub mod cli;
pub mod generators;
pub mod mdp;
pub mod numerics;
pub mod report;
pub mod spectral;
pub mod suite;
pub mod vi;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Pivot magnitude fell below the singularity floor during elimination.
    #[error("singular matrix: pivot magnitude {pivot:.3e} below 1e-12 at column {col}")]
    SingularMatrix { col: usize, pivot: f64 },

    /// Input to the symmetric eigensolver was not symmetric within tolerance.
    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds 1e-10")]
    NotSymmetric { asymmetry: f64 },

    /// The Jacobi sweep bound was exhausted before the off-diagonal converged.
    #[error("eigensolver did not converge within {sweeps} sweeps (off-diagonal {off_diag:.3e})")]
    NoConvergence { sweeps: usize, off_diag: f64 },

    /// An operation requiring a strongly connected graph received one that is not.
    #[error("graph is not strongly connected")]
    NotIrreducible,

    /// Policy enumeration would exceed the configured cap.
    #[error("policy space {actions}^{states} exceeds the enumeration cap {cap}")]
    TooLarge {
        states: usize,
        actions: usize,
        cap: u64,
    },

    /// No policy dominated all others componentwise; signals a broken model,
    /// since a dominant policy always exists for finite discounted MDPs.
    #[error("no componentwise-dominant policy found")]
    NoDominantPolicy,

    /// The componentwise sandwich on the error update failed beyond tolerance.
    #[error("sandwich bound violated at step {step}, state {state}: gap {gap:.3e}")]
    SandwichViolated { step: usize, state: usize, gap: f64 },

    /// Terminal distribution for the backward recursion is not a probability vector.
    #[error("invalid terminal distribution: {reason}")]
    InvalidTerminal { reason: String },

    /// The remainder vector is numerically zero (consensus reached); the
    /// requested quantity is undefined there.
    #[error("delta is numerically zero (consensus reached)")]
    ZeroDelta,

    /// A weight fell below the positivity floor needed for the generalized
    /// eigenvalue problem.
    #[error("weight p[{index}] = {value:.3e} below the positivity floor 1e-14")]
    NonPositiveWeights { index: usize, value: f64 },

    /// Rejection sampling ran out of attempts.
    #[error("no admissible model after {attempts} attempts; last failure: {last_failure}")]
    ExhaustedAttempts { attempts: u32, last_failure: String },

    /// Model validation failure (loader or constructor).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Configuration validation failure.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A diagnostic needed per-step matrices that the trace did not retain.
    #[error("trace did not retain per-step matrices (retention limit exceeded)")]
    MatricesNotRetained,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
