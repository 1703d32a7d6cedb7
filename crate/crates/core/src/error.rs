//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by model construction, estimation and search.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model matrix that must be positive definite is numerically singular.
    #[error("singular model: {0}")]
    SingularModel(String),

    /// The one-parameter weight formula degenerates (constant regression function).
    #[error("singular weights: {0}")]
    SingularWeights(String),

    /// The unbiasedness identity cannot be satisfied by any weight choice.
    #[error("unbiasedness infeasible: {0}")]
    InfeasibleUnbiasedness(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A second derivative (or other optional capability) is required but absent.
    #[error("missing capability: {0}")]
    MissingCapability(String),

    /// A point falls outside the domain of a transformation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("design search failed: {0}")]
    Search(String),
}

pub type Result<T> = std::result::Result<T, Error>;
