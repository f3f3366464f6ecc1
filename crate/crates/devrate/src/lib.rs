//! Kernel regression estimators together with the deviation-theoretic
//! machinery needed to study their pointwise concentration: cumulant limit
//! functions, Fenchel–Legendre rate functions, closed-form moderate-deviation
//! rates, and a reproducible Monte Carlo verification lab.
//!
//! The crate is organized around these modules:
//!
//! - [`quad`]: Gauss–Legendre panels and tensor-product grids used by every
//!   quadrature in the crate.
//! - [`kernels`]: smoothing kernels with exact metadata (order, support,
//!   positive/negative support measures) and numerical order verification.
//! - [`models`]: analytic joint models for `(X, Y)` exposing densities,
//!   regression functions, conditional covariances, Laplace transforms and
//!   seeded samplers.
//! - [`schedules`]: power-law bandwidth schedules and the regular-variation
//!   arithmetic shared by the estimators and the rate normalizations.
//! - [`estimators`]: the Nadaraya–Watson estimator and its semi-recursive
//!   variant, plus a quadrature-based bias probe.
//! - [`ratefn`]: cumulant limit functions, convex conjugates, regression rate
//!   functions, moderate-deviation rates and finite-sample cumulants.
//! - [`devlab`]: Monte Carlo experiments (deviation curves, variance checks,
//!   linearized-error diagnostics) with bit-reproducible output.

pub mod devlab;
pub mod estimators;
pub mod kernels;
pub mod models;
pub mod quad;
pub mod ratefn;
pub mod schedules;

/// Crate-wide error type. The three variants map onto the three failure
/// classes surfaced by the command-line front end: bad configuration, bad
/// runtime input, and numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
