//! Adaptive Gauss-Legendre quadrature on 15-node panels.
//!
//! A panel is accepted when bisecting it changes the estimate by less than
//! the tolerance allotted to that panel; otherwise both halves are refined
//! recursively. The integrands in this crate are smooth, so the recursion
//! stays shallow.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// 15-point Gauss-Legendre nodes and weights on [-1, 1].
const GL15: [(f64, f64); 15] = [
    (-0.98799251802048542849, 0.030753241996117268355),
    (-0.93727339240070590431, 0.070366047488108124709),
    (-0.84820658341042721620, 0.107159220467171935010),
    (-0.72441773136017004742, 0.139570677926154314450),
    (-0.57097217260853884754, 0.166269205816993933550),
    (-0.39415134707756336990, 0.186161000015562211030),
    (-0.20119409399743452230, 0.198431485327111576460),
    (0.0, 0.202578241925561272880),
    (0.20119409399743452230, 0.198431485327111576460),
    (0.39415134707756336990, 0.186161000015562211030),
    (0.57097217260853884754, 0.166269205816993933550),
    (0.72441773136017004742, 0.139570677926154314450),
    (0.84820658341042721620, 0.107159220467171935010),
    (0.93727339240070590431, 0.070366047488108124709),
    (0.98799251802048542849, 0.030753241996117268355),
];

const MAX_DEPTH: usize = 40;

/// Default absolute tolerance used by the model-matrix integrals.
pub fn default_tol<T: Scalar>() -> T {
    real(1e-12)
}

fn panel<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> T {
    let two = real::<T>(2.0);
    let half = (b - a) / two;
    let mid = (a + b) / two;
    let mut acc = T::zero();
    for &(x, w) in GL15.iter() {
        acc += real::<T>(w) * f(mid + half * real::<T>(x));
    }
    acc * half
}

fn refine<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, whole: T, tol: T, depth: usize) -> Result<T> {
    let mid = (a + b) / real::<T>(2.0);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let delta = (left + right - whole).abs();
    if delta <= tol || depth >= MAX_DEPTH {
        if depth >= MAX_DEPTH && delta > tol * real::<T>(100.0) {
            return Err(Error::Numeric(format!(
                "quadrature failed to converge: residual {:e} at max depth",
                delta.to_f64().unwrap_or(f64::NAN)
            )));
        }
        return Ok(left + right);
    }
    let half_tol = tol / real::<T>(2.0);
    Ok(refine(f, a, mid, left, half_tol, depth + 1)? + refine(f, mid, b, right, half_tol, depth + 1)?)
}

/// Integrates a scalar function over [a, b] to absolute tolerance `tol`.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let whole = panel(&f, a, b);
    refine(&f, a, b, whole, tol, 0)
}

fn panel_vec<T: Scalar, F: Fn(T) -> DVector<T>>(f: &F, dim: usize, a: T, b: T) -> DVector<T> {
    let two = real::<T>(2.0);
    let half = (b - a) / two;
    let mid = (a + b) / two;
    let mut acc = DVector::zeros(dim);
    for &(x, w) in GL15.iter() {
        acc += f(mid + half * real::<T>(x)) * real::<T>(w);
    }
    acc * half
}

fn refine_vec<T: Scalar, F: Fn(T) -> DVector<T>>(
    f: &F,
    dim: usize,
    a: T,
    b: T,
    whole: &DVector<T>,
    tol: T,
    depth: usize,
) -> Result<DVector<T>> {
    let mid = (a + b) / real::<T>(2.0);
    let left = panel_vec(f, dim, a, mid);
    let right = panel_vec(f, dim, mid, b);
    let sum = &left + &right;
    let delta = (&sum - whole).amax();
    if delta <= tol || depth >= MAX_DEPTH {
        if depth >= MAX_DEPTH && delta > tol * real::<T>(100.0) {
            return Err(Error::Numeric(format!(
                "vector quadrature failed to converge: residual {:e} at max depth",
                delta.to_f64().unwrap_or(f64::NAN)
            )));
        }
        return Ok(sum);
    }
    let half_tol = tol / real::<T>(2.0);
    let l = refine_vec(f, dim, a, mid, &left, half_tol, depth + 1)?;
    let r = refine_vec(f, dim, mid, b, &right, half_tol, depth + 1)?;
    Ok(l + r)
}

/// Integrates a vector-valued function componentwise over [a, b].
pub fn integrate_vec<T: Scalar, F: Fn(T) -> DVector<T>>(
    f: F,
    dim: usize,
    a: T,
    b: T,
    tol: T,
) -> Result<DVector<T>> {
    if a == b {
        return Ok(DVector::zeros(dim));
    }
    let whole = panel_vec(&f, dim, a, b);
    refine_vec(&f, dim, a, b, &whole, tol, 0)
}

/// Integrates the outer product g(t) g(t)^T over [a, b]; the result is the
/// symmetric `dim x dim` Gram matrix of `g`.
pub fn integrate_outer<T: Scalar, F: Fn(T) -> DVector<T>>(
    g: F,
    dim: usize,
    a: T,
    b: T,
    tol: T,
) -> Result<nalgebra::DMatrix<T>> {
    // Pack the upper triangle into a vector-valued integrand.
    let packed = dim * (dim + 1) / 2;
    let flat = integrate_vec(
        |t| {
            let v = g(t);
            let mut out = DVector::zeros(packed);
            let mut k = 0;
            for i in 0..dim {
                for j in i..dim {
                    out[k] = v[i] * v[j];
                    k += 1;
                }
            }
            out
        },
        packed,
        a,
        b,
        tol,
    )?;
    let mut m = nalgebra::DMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            m[(i, j)] = flat[k];
            m[(j, i)] = flat[k];
            k += 1;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|t: f64| 4.0 * t * t, 1.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 28.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn oscillatory() {
        let v = integrate(|t: f64| (10.0 * t).sin(), 0.0, 3.0, 1e-12).unwrap();
        let exact = (1.0 - (30.0f64).cos()) / 10.0;
        assert_abs_diff_eq!(v, exact, epsilon = 1e-11);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|t: f64| t, 1.5, 1.5, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn gram_matrix_of_monomials() {
        // g = (1, t) on [0,1]: Gram = [[1, 1/2], [1/2, 1/3]]
        let m = integrate_outer(
            |t: f64| nalgebra::dvector![1.0, t],
            2,
            0.0,
            1.0,
            1e-13,
        )
        .unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m[(0, 1)], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(m[(1, 0)], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(m[(1, 1)], 1.0 / 3.0, epsilon = 1e-13);
    }
}
