//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here operates on symmetric matrices of the sizes that occur in
//! this crate (the parameter dimension, or the design size). Positive-definite
//! solves go through Cholesky and failures are reported, never regularized.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::SingularModel(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    Ok(cholesky(m, what)?.inverse())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let mut ev = SymmetricEigen::new(m.clone()).eigenvalues;
    ev.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues must be ordered"));
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)[0]
}

/// Numerical rank of a symmetric positive semi-definite matrix: eigenvalues
/// below `rel_tol` times the largest count as zero.
pub fn psd_rank<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let ev = sym_eigenvalues(m);
    let largest = ev[ev.len() - 1].max(T::zero());
    if largest == T::zero() {
        return 0;
    }
    ev.iter().filter(|&&l| l > rel_tol * largest).count()
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix, with a
/// relative eigenvalue cutoff.
pub fn psd_pseudo_inverse<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(m.clone());
    let largest = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &l| acc.max(l.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l.abs() > rel_tol * largest && largest > T::zero() {
            let q = eig.eigenvectors.column(k);
            out += &q * q.transpose() / l;
        }
    }
    out
}

/// Checks that `m` is positive semi-definite up to `rel_tol` times its largest
/// eigenvalue magnitude.
pub fn is_psd<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> bool {
    let ev = sym_eigenvalues(m);
    let scale = ev[ev.len() - 1].abs().max(ev[0].abs()).max(T::one());
    ev[0] >= -rel_tol * scale
}

/// Maximum absolute entry difference between two matrices.
pub fn max_abs_diff<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a - b).amax()
}

/// Relative numerical-rank threshold used for rank decisions.
pub fn rank_tol<T: Scalar>() -> T {
    real(1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn rank_of_singular_gram() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert_eq!(psd_rank(&m, 1e-10), 1);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(psd_rank(&id, 1e-10), 3);
    }

    #[test]
    fn pseudo_inverse_of_rank_one() {
        let m = dmatrix![4.0, 0.0; 0.0, 0.0];
        let p: nalgebra::DMatrix<f64> = psd_pseudo_inverse(&m, 1e-10);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-14);
        assert!(p[(1, 1)].abs() < 1e-14);
        // Moore-Penrose property: m p m = m
        let mpm = &m * &p * &m;
        assert!(max_abs_diff(&mpm, &m) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(cholesky(&m, "test matrix").is_err());
    }
}
