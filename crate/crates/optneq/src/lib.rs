//! Distributed simulation toolkit for finding the *optimal* Nash equilibrium of a
//! monotone game: among all solutions of the variational inequality given by the
//! stacked game map `F = Σ F_i`, select the one minimizing a separable objective
//! `f = Σ f_i`, where both `F_i` and `f_i` are private to agent `i`.
//!
//! Two single-timescale iteratively regularized gradient-tracking loops are
//! provided: a push-pull scheme for directed networks (row-stochastic pull matrix,
//! column-stochastic push matrix) and a gossip scheme for undirected networks with
//! stochastic local oracles. Both damp the regularization weight and the stepsize
//! on polynomial schedules so the iterates track the Tikhonov trajectory
//! `λ ↦ SOL(F + λ∇f)` down to the optimal equilibrium.
//!
//! The crate splits into:
//! - [`graph`]: topologies, mixing matrices, spectral diagnostics;
//! - [`schedule`]: stepsize/regularization schedules and their admissibility rules;
//! - [`problem`]: local oracles, the smoothed Cournot test family, instance builders;
//! - [`solvers`]: the two distributed loops plus the Tikhonov ground-truth solvers;
//! - [`metrics`]: per-iteration error measures, CSV logs, decay-rate fits;
//! - [`harness`]: experiment configs, presets, validation, reproducible runs.

pub mod graph;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod solvers;

/// Which distributed loop an experiment runs. Doubles as the mode selector for
/// schedule admissibility, since the two algorithms impose different exponent
/// conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Row-stochastic pull of decisions plus column-stochastic push of trackers,
    /// for directed networks with deterministic oracles.
    IrPushPull,
    /// Symmetric gossip with stochastic local oracles, for undirected networks.
    IrDsgt,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::IrPushPull => write!(f, "ir-push-pull"),
            Algorithm::IrDsgt => write!(f, "ir-dsgt"),
        }
    }
}

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on inputs or configuration does not hold.
    #[error("validation: {0}")]
    Validation(String),

    /// Array shapes or agent counts do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine could not reach its accuracy target.
    #[error("numerical: {0}")]
    Numerical(String),

    /// An iterate became non-finite.
    #[error("divergence at iteration {iter}: {detail}")]
    Divergence { iter: u64, detail: String },

    /// An iterative solver ran out of its iteration budget.
    /// Carries the best iterate seen so the caller can inspect it.
    #[error("not converged after {iters} iterations (best residual {residual:e})")]
    NotConverged {
        best: Vec<f64>,
        residual: f64,
        iters: u64,
    },

    /// Malformed text input (topology lists, parameter files, CSV, JSON).
    #[error("parse: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
