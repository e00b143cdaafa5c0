//! Generalized lasso solving and uniqueness certification.
//!
//! The crate is organized around the penalized least-squares problem
//!
//! ```text
//!   minimize over beta:  (1/2) * ||y - X beta||^2 + lambda * ||D beta||_1
//! ```
//!
//! together with its exponential-family (logistic / Poisson) variants.
//! Modules:
//!
//! * [`linalg`] — dense rank / null-space / pseudoinverse primitives with
//!   explicit tolerance handling.
//! * [`penalty`] — constructors for the structured penalty matrix `D`
//!   (identity, higher-order differences, graph incidence, trend filtering).
//! * [`lp`] — a small dense simplex used by the feasibility checks.
//! * [`solver_sq`] — squared-loss solver returning primal and dual solutions,
//!   KKT diagnostics, and the boundary/active pattern of the dual.
//! * [`solver_glm`] — logistic and Poisson variants, Bregman projections, and
//!   existence checks for the unpenalized and penalized fits.
//! * [`certify`] — uniqueness certificates, non-uniqueness witnesses, and the
//!   general-position checker.
//! * [`experiments`] — Monte Carlo and perturbation studies built on top of
//!   the solvers and certifiers.
//! * [`cli`] — file formats and argument handling for the `genlasso` binary.

pub mod certify;
pub mod cli;
pub mod experiments;
pub mod linalg;
pub mod lp;
pub mod penalty;
pub mod solver_glm;
pub mod solver_sq;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// An argument is out of its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A NaN or infinity showed up where a finite number is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// An iterative method ran out of iterations before meeting its tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),
    /// Iterates grew without bound (e.g. a fit with no finite minimizer).
    #[error("diverged: {0}")]
    Diverged(String),
    /// A decomposition or downstream numeric step failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The linear-programming subroutine could not produce a usable answer.
    #[error("linear program: {0}")]
    Lp(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error onto: `2` for usage/input
    /// problems, `3` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch(_)
            | Error::InvalidInput(_)
            | Error::NonFinite(_)
            | Error::Io(_)
            | Error::Parse(_)
            | Error::Json(_) => 2,
            Error::NonConvergence(_) | Error::Diverged(_) | Error::Numerical(_) | Error::Lp(_) => 3,
        }
    }
}
