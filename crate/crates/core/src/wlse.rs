//! Weighted least squares at the design points: the finite-sample best
//! linear unbiased estimator (X^T Sigma^{-1} X)^{-1} X^T Sigma^{-1} Y and its
//! variance, used as the benchmark the discrete approximation is compared to.

use nalgebra::{DMatrix, DVector};

use crate::basis::RegressionBasis;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::TriangularKernel;
use crate::linalg;
use crate::scalar::Scalar;

/// Variance and information matrix of the weighted least squares estimator.
#[derive(Clone, Debug)]
pub struct WlseResult<T> {
    /// (X^T Sigma^{-1} X)^{-1}.
    pub variance: DMatrix<T>,
    /// X^T Sigma^{-1} X.
    pub info: DMatrix<T>,
}

fn design_matrix<T: Scalar>(basis: &RegressionBasis<T>, design: &Design<T>) -> DMatrix<T> {
    let n = design.n();
    let m = basis.dim();
    DMatrix::from_fn(n, m, |i, j| basis.eval_component(j, design.points()[i]))
}

/// Solves Sigma Z = X through the Cholesky factor; Sigma^{-1} is never formed.
fn whitened_design<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let sigma = kernel.covariance_matrix(design)?;
    let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
        Error::InvalidDesign("covariance matrix is not positive definite at the design".into())
    })?;
    let x = design_matrix(basis, design);
    let z = chol.solve(&x);
    Ok((x, z))
}

/// Symmetrized information matrix with a rank guard against rank-deficient
/// design matrices that roundoff would let through the factorization.
fn information<T: Scalar>(x: &DMatrix<T>, z: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let info = x.transpose() * z;
    let info = (&info + info.transpose()) * crate::scalar::real::<T>(0.5);
    if linalg::psd_rank(&info, linalg::rank_tol()) < info.nrows() {
        return Err(Error::SingularModel("design matrix is rank deficient".into()));
    }
    let variance = linalg::spd_inverse(&info, "information matrix X^T Sigma^{-1} X")
        .map_err(|_| Error::SingularModel("design matrix is rank deficient".into()))?;
    Ok((info, variance))
}

/// Variance of the weighted least squares estimator at the design.
pub fn wlse_variance<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
) -> Result<WlseResult<T>> {
    let (x, z) = whitened_design(basis, kernel, design)?;
    let (info, variance) = information(&x, &z)?;
    Ok(WlseResult { variance, info })
}

/// Weighted least squares as a reusable linear map from observations to
/// parameter estimates.
#[derive(Clone, Debug)]
pub struct WlseEstimator<T> {
    /// m x n matrix mapping Y to the estimate.
    projector: DMatrix<T>,
    pub variance: DMatrix<T>,
}

impl<T: Scalar> WlseEstimator<T> {
    pub fn new(
        basis: &RegressionBasis<T>,
        kernel: &TriangularKernel<T>,
        design: &Design<T>,
    ) -> Result<Self> {
        let (x, z) = whitened_design(basis, kernel, design)?;
        let (_, variance) = information(&x, &z)?;
        let projector = &variance * z.transpose();
        Ok(Self { projector, variance })
    }

    pub fn dim(&self) -> usize {
        self.projector.nrows()
    }

    pub fn n(&self) -> usize {
        self.projector.ncols()
    }

    pub fn estimate(&self, observations: &DVector<T>) -> Result<DVector<T>> {
        if observations.len() != self.n() {
            return Err(Error::InvalidInput(format!(
                "observation length {} != design size {}",
                observations.len(),
                self.n()
            )));
        }
        Ok(&self.projector * observations)
    }

    /// Column-wise estimates for an n x r matrix of replicates.
    pub fn estimate_all(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>> {
        if observations.nrows() != self.n() {
            return Err(Error::InvalidInput(format!(
                "observation rows {} != design size {}",
                observations.nrows(),
                self.n()
            )));
        }
        Ok(&self.projector * observations)
    }
}

/// One-shot weighted least squares estimate.
pub fn wlse_estimate<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
    observations: &DVector<T>,
) -> Result<DVector<T>> {
    WlseEstimator::new(basis, kernel, design)?.estimate(observations)
}

/// Efficiency tr(reference) / tr(variance), in (0, 1] when the reference is
/// the continuous-time lower bound.
pub fn efficiency_of<T: Scalar>(variance: &DMatrix<T>, reference_c_inv: &DMatrix<T>) -> T {
    reference_c_inv.trace() / variance.trace()
}
