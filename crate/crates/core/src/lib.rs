//! Best linear unbiased estimation and optimal experimental design for
//! linear regression with triangular-kernel correlated Gaussian errors.
//!
//! The continuous-time model admits a closed-form best linear unbiased
//! estimator whose variance is the inverse of
//! `C = int f' f'^T dt + f(a) f(a)^T / a`. This crate computes that
//! estimator, approximates it at finitely many observation times with
//! optimally weighted increments, benchmarks the approximation against
//! weighted least squares, optimizes the observation times by particle swarm
//! search, and validates the closed forms by Monte Carlo simulation.
//!
//! Kernels of product form `K(t,t') = u(t) v(t')` (Brownian motion,
//! exponential, custom) reduce to the Brownian case through a monotone time
//! change, which is applied automatically where needed.
//!
//! All numeric code is generic over the [`Scalar`] type; the crate root
//! exports `f64` aliases for the common types.

pub mod basis;
pub mod continuous;
pub mod design;
pub mod discrete;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod quad;
pub mod scalar;
pub mod search;
pub mod wlse;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Re-export of the linear-algebra backend so downstream code can name the
/// matrix and vector types appearing in this crate's public API.
pub use nalgebra;

/// Regression basis at the default `f64` precision.
pub type Basis = basis::RegressionBasis<f64>;
/// Design interval at the default `f64` precision.
pub type Interval = basis::Interval<f64>;
/// Triangular covariance kernel at the default `f64` precision.
pub type Kernel = kernel::TriangularKernel<f64>;
/// Time-changed model at the default `f64` precision.
pub type TransformedModel = kernel::TransformedModel<f64>;
/// Observation-time design at the default `f64` precision.
pub type Design = design::Design<f64>;
/// Discrete increment-weight estimator at the default `f64` precision.
pub type Estimator = discrete::LinearEstimator<f64>;
/// Continuous-time estimator summary at the default `f64` precision.
pub type ContinuousBlue = continuous::ContinuousBlue<f64>;
/// Signed vector measure at the default `f64` precision.
pub type VectorMeasure = continuous::VectorMeasure<f64>;
/// Weighted-least-squares variance summary at the default `f64` precision.
pub type WlseResult = wlse::WlseResult<f64>;
/// Weighted-least-squares estimator at the default `f64` precision.
pub type WlseEstimator = wlse::WlseEstimator<f64>;
/// Design-search outcome at the default `f64` precision.
pub type SearchResult = search::SearchResult<f64>;
/// Monte Carlo plan at the default `f64` precision.
pub type SimulationPlan = montecarlo::SimulationPlan<f64>;
