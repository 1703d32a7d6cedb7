//! Continuous-time best linear unbiased estimation: the model matrix C and
//! its inverse (the BLUE variance), the signed-measure representation of the
//! estimator, the optimality residual check, and the zero-left-endpoint
//! degenerate cases.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{Interval, RegressionBasis};
use crate::discrete::LinearEstimator;
use crate::error::{Error, Result};
use crate::kernel::TriangularKernel;
use crate::linalg;
use crate::quad;
use crate::scalar::{real, Scalar};

/// Continuous-time BLUE for a non-degenerate model: C and C^{-1} = Var.
#[derive(Clone, Debug)]
pub struct ContinuousBlue<T> {
    pub c: DMatrix<T>,
    pub c_inv: DMatrix<T>,
}

impl<T: Scalar> ContinuousBlue<T> {
    pub fn variance(&self) -> &DMatrix<T> {
        &self.c_inv
    }

    pub fn trace_variance(&self) -> T {
        self.c_inv.trace()
    }
}

/// C = int_a^b f'(t) f'(t)^T dt + f(a) f(a)^T / a for the Brownian-motion
/// model on [a, b] with a > 0.
pub fn c_matrix<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
) -> Result<ContinuousBlue<T>> {
    interval.require_positive_start()?;
    let m = basis.derivative_gram(interval)?;
    let fa = basis.eval(interval.a());
    let c = &m + &fa * fa.transpose() / interval.a();
    let c_inv = linalg::spd_inverse(&c, "model matrix C")?;
    Ok(ContinuousBlue { c, c_inv })
}

/// C for a general triangular kernel through the explicit integrand
/// (f'v - v'f)(f'v - v'f)^T / (v^2 (u'v - uv')) plus the boundary term
/// f(a) f(a)^T / (u(a) v(a)). Agrees with the time-change route.
pub fn blue_general_kernel<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    interval: &Interval<T>,
) -> Result<ContinuousBlue<T>> {
    kernel.validate(interval)?;
    if kernel.u(interval.a()) == T::zero() {
        return Err(Error::InvalidKernel(
            "u(a) = 0: the observation at a is error-free; use the degenerate-case operations"
                .into(),
        ));
    }
    let dim = basis.dim();
    // g g^T = w w^T / (v^2 (u'v - uv')) with w = f'v - v'f; the validated
    // kernel has u'v - uv' > 0 and v > 0 at the quadrature nodes.
    let integrand = |t: T| {
        let v = kernel.v(t);
        let denom = kernel.u_dot(t) * v - kernel.u(t) * kernel.v_dot(t);
        let w = basis.deriv(t) * v - basis.eval(t) * kernel.v_dot(t);
        w / (v * denom.sqrt())
    };
    let mut c = quad::integrate_outer(integrand, dim, interval.a(), interval.b(), quad::default_tol())?;
    let fa = basis.eval(interval.a());
    let scale = kernel.u(interval.a()) * kernel.v(interval.a());
    c += &fa * fa.transpose() / scale;
    let c_inv = linalg::spd_inverse(&c, "general-kernel model matrix C")?;
    Ok(ContinuousBlue { c, c_inv })
}

/// Vector-valued signed measure: point masses plus an absolutely continuous
/// density. Represents a linear estimator of the trajectory.
pub struct VectorMeasure<T> {
    atoms: Vec<(T, DVector<T>)>,
    density: Option<Arc<dyn Fn(T) -> DVector<T> + Send + Sync>>,
    support: Interval<T>,
    dim: usize,
}

impl<T: Scalar> VectorMeasure<T> {
    pub fn new(
        atoms: Vec<(T, DVector<T>)>,
        density: Option<Arc<dyn Fn(T) -> DVector<T> + Send + Sync>>,
        support: Interval<T>,
        dim: usize,
    ) -> Self {
        Self {
            atoms,
            density,
            support,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(T, DVector<T>)] {
        &self.atoms
    }

    pub fn density_at(&self, t: T) -> Option<DVector<T>> {
        self.density.as_ref().map(|p| p(t))
    }

    /// Returns a copy with every atom mass scaled by `factor`.
    pub fn scale_atoms(&self, factor: T) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|(t, m)| (*t, m * factor))
                .collect(),
            density: self.density.clone(),
            support: self.support,
            dim: self.dim,
        }
    }

    /// The discrete measure of a finite-sample estimator: the coefficient of
    /// each observation, accumulated from the increment weights.
    pub fn from_estimator(estimator: &LinearEstimator<T>) -> Self {
        let coeffs = estimator.observation_coefficients();
        let atoms = estimator
            .design()
            .points()
            .iter()
            .copied()
            .zip(coeffs)
            .collect();
        Self {
            atoms,
            density: None,
            support: *estimator.interval(),
            dim: estimator.dim(),
        }
    }

    /// int K(s, t) dG(s), splitting the density integral at the kink s = t.
    pub fn integrate_kernel(&self, kernel: &TriangularKernel<T>, t: T) -> Result<DVector<T>> {
        let mut acc = DVector::zeros(self.dim);
        for (s, mass) in &self.atoms {
            acc += mass * kernel.k(*s, t);
        }
        if let Some(p) = &self.density {
            let (a, b) = (self.support.a(), self.support.b());
            let tol = real::<T>(1e-13);
            let tc = t.clamp(a, b);
            let below = quad::integrate_vec(|s| p(s) * kernel.k(s, t), self.dim, a, tc, tol)?;
            let above = quad::integrate_vec(|s| p(s) * kernel.k(s, t), self.dim, tc, b, tol)?;
            acc += below + above;
        }
        Ok(acc)
    }
}

/// The signed-measure form mu*(dt) = P_a delta_a + p(t) dt + P_b delta_b of
/// the continuous-time BLUE. Needs second derivatives of the basis and the
/// kernel; set `allow_finite_difference` to substitute a central difference
/// (step (b-a) * 1e-5) where an analytic one is missing.
pub fn signed_measure<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    interval: &Interval<T>,
    allow_finite_difference: bool,
) -> Result<VectorMeasure<T>> {
    let blue = blue_general_kernel(basis, kernel, interval)?;
    let c_inv = blue.c_inv.clone();
    let (a, b) = (interval.a(), interval.b());

    let analytic = basis.has_second_derivs() && kernel.has_second_derivatives();
    if !analytic && !allow_finite_difference {
        return Err(Error::MissingCapability(
            "second derivatives are required for the signed-measure form; \
             enable the finite-difference fallback or supply them"
                .into(),
        ));
    }

    // g(t) = (1/v) (f'v - v'f) / (u'v - uv'); the measure density is
    // p(t) = -C^{-1} g'(t) / v(t).
    let g = {
        let basis = basis.clone();
        let kernel = kernel.clone();
        move |t: T| -> DVector<T> {
            let v = kernel.v(t);
            let d = kernel.u_dot(t) * v - kernel.u(t) * kernel.v_dot(t);
            (basis.deriv(t) * v - basis.eval(t) * kernel.v_dot(t)) / (v * d)
        }
    };

    let g_prime: Arc<dyn Fn(T) -> DVector<T> + Send + Sync> = if analytic {
        let basis = basis.clone();
        let kernel = kernel.clone();
        Arc::new(move |t: T| {
            let v = kernel.v(t);
            let vd = kernel.v_dot(t);
            let vdd = kernel.v_ddot(t).unwrap();
            let ud = kernel.u_dot(t);
            let udd = kernel.u_ddot(t).unwrap();
            let u = kernel.u(t);
            let f = basis.eval(t);
            let fd = basis.deriv(t);
            let fdd = basis.second_deriv(t).unwrap();
            let w = &fd * v - &f * vd;
            let w_prime = &fdd * v - &f * vdd;
            let d = ud * v - u * vd;
            let d_prime = udd * v - u * vdd;
            let vd_prod = v * d;
            (w_prime * vd_prod - w * (vd * d + v * d_prime)) / (vd_prod * vd_prod)
        })
    } else {
        let g = g.clone();
        let h = interval.length() * real::<T>(1e-5);
        Arc::new(move |t: T| (g(t + h) - g(t - h)) / (real::<T>(2.0) * h))
    };

    let mass_a = {
        let ventry = kernel.u_dot(a) * kernel.v(a) - kernel.u(a) * kernel.v_dot(a);
        let num = basis.eval(a) * kernel.u_dot(a) - basis.deriv(a) * kernel.u(a);
        &c_inv * num / (kernel.u(a) * ventry)
    };
    let mass_b = {
        let ventry = kernel.u_dot(b) * kernel.v(b) - kernel.u(b) * kernel.v_dot(b);
        let num = basis.deriv(b) * kernel.v(b) - basis.eval(b) * kernel.v_dot(b);
        &c_inv * num / (kernel.v(b) * ventry)
    };

    let density = {
        let kernel = kernel.clone();
        let c_inv = c_inv.clone();
        Arc::new(move |t: T| -(&c_inv * g_prime(t)) / kernel.v(t))
    };

    Ok(VectorMeasure::new(
        vec![(a, mass_a), (b, mass_b)],
        Some(density),
        *interval,
        basis.dim(),
    ))
}

/// Maximum residual of the optimality condition
/// int K(s,t) dG(s) = Var f(t) over the grid points. The continuous-time
/// BLUE measure satisfies it to quadrature accuracy; any other unbiased
/// estimator leaves a visible residual.
pub fn verify_blue_condition<T: Scalar>(
    measure: &VectorMeasure<T>,
    kernel: &TriangularKernel<T>,
    variance: &DMatrix<T>,
    basis: &RegressionBasis<T>,
    grid: &[T],
) -> Result<T> {
    let mut worst = T::zero();
    for &t in grid {
        let lhs = measure.integrate_kernel(kernel, t)?;
        let rhs = variance * basis.eval(t);
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(worst)
}

/// Variance and the error-free-observation coefficient for a model on [0, b]
/// with no intercept direction and f(0) != 0: the estimator reads the exact
/// observation Y_0 with coefficient M0^{-1} f(0) / (f(0)^T M0^{-1} f(0)) and
/// has variance M0^{-1} - M0^{-1} f(0) f(0)^T M0^{-1} / (f(0)^T M0^{-1} f(0)).
#[derive(Clone, Debug)]
pub struct DegenerateBlue<T> {
    pub variance: DMatrix<T>,
    pub y0_coefficient: Option<DVector<T>>,
}

fn require_zero_start<T: Scalar>(interval: &Interval<T>) -> Result<()> {
    if interval.a() != T::zero() {
        return Err(Error::InvalidInterval(format!(
            "degenerate-case operations require a = 0, got {:?}",
            interval.a().to_f64()
        )));
    }
    Ok(())
}

pub fn degenerate_no_intercept<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
) -> Result<DegenerateBlue<T>> {
    require_zero_start(interval)?;
    let rank = basis.gram_rank(interval)?;
    if rank.has_intercept || rank.rank < basis.dim() {
        return Err(Error::SingularModel(
            "the derivative Gram matrix is singular; use the intercept operation".into(),
        ));
    }
    let f0 = basis.eval(T::zero());
    if f0.amax() <= real::<T>(1e-12) {
        return Err(Error::InvalidInput(
            "f(0) = 0: use the zero-at-origin operation".into(),
        ));
    }
    let m0 = basis.derivative_gram(interval)?;
    let m0_inv = linalg::spd_inverse(&m0, "derivative Gram matrix M0")?;
    let m0f = &m0_inv * &f0;
    let denom = f0.dot(&m0f);
    let variance = &m0_inv - &m0f * m0f.transpose() / denom;
    Ok(DegenerateBlue {
        variance,
        y0_coefficient: Some(m0f / denom),
    })
}

/// Variance M0^{-1} for a model on [0, b] with f(0) = 0: the observation at
/// the origin is identically zero and carries no information.
pub fn degenerate_f0_zero<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
) -> Result<DegenerateBlue<T>> {
    require_zero_start(interval)?;
    let f0 = basis.eval(T::zero());
    if f0.amax() > real::<T>(1e-12) {
        return Err(Error::InvalidInput(
            "f(0) != 0: use the no-intercept operation".into(),
        ));
    }
    let m0 = basis.derivative_gram(interval)?;
    let variance = linalg::spd_inverse(&m0, "derivative Gram matrix M0")?;
    Ok(DegenerateBlue {
        variance,
        y0_coefficient: None,
    })
}

/// Covariance blocks for a model on [0, b] with one constant component: the
/// intercept is read off the error-free observation at 0 and the remaining
/// coefficients follow the zero-at-origin case after the shift f - f(0).
#[derive(Clone, Debug)]
pub struct InterceptBlue<T> {
    /// Index of the constant component in the original ordering.
    pub constant_index: usize,
    pub var_intercept: T,
    /// cov(intercept, other coefficients), in the reduced ordering.
    pub cov_row: DVector<T>,
    /// Covariance of the non-constant coefficients.
    pub var_rest: DMatrix<T>,
}

impl<T: Scalar> InterceptBlue<T> {
    /// Full (m x m) covariance with the intercept first and the remaining
    /// components in their original relative order.
    pub fn full_covariance(&self) -> DMatrix<T> {
        let r = self.var_rest.nrows();
        let mut out = DMatrix::zeros(r + 1, r + 1);
        out[(0, 0)] = self.var_intercept;
        for i in 0..r {
            out[(0, i + 1)] = self.cov_row[i];
            out[(i + 1, 0)] = self.cov_row[i];
            for j in 0..r {
                out[(i + 1, j + 1)] = self.var_rest[(i, j)];
            }
        }
        out
    }
}

pub fn degenerate_intercept<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
) -> Result<InterceptBlue<T>> {
    require_zero_start(interval)?;
    // Locate constant components by a vanishing derivative on a grid.
    let grid = interval.grid(101);
    let mut constants = Vec::new();
    for k in 0..basis.dim() {
        let flat = grid
            .iter()
            .all(|&t| basis.deriv_component(k, t).abs() <= real::<T>(1e-12));
        if flat {
            constants.push(k);
        }
    }
    if constants.len() != 1 {
        return Err(Error::SingularModel(format!(
            "expected exactly one constant component, found {}",
            constants.len()
        )));
    }
    let constant_index = constants[0];
    let rest: Vec<usize> = (0..basis.dim()).filter(|&k| k != constant_index).collect();
    if rest.is_empty() {
        // Pure location model on [0, b]: Y_0 = theta exactly.
        return Ok(InterceptBlue {
            constant_index,
            var_intercept: T::zero(),
            cov_row: DVector::zeros(0),
            var_rest: DMatrix::zeros(0, 0),
        });
    }
    let reduced = basis.select(&rest)?;
    // The shift f - f(0) leaves the derivative unchanged.
    let m0 = reduced.derivative_gram(interval)?;
    let m0_inv = linalg::spd_inverse(&m0, "reduced derivative Gram matrix")?;
    let f0 = reduced.eval(T::zero());
    let m0f = &m0_inv * &f0;
    Ok(InterceptBlue {
        constant_index,
        var_intercept: f0.dot(&m0f),
        cov_row: -m0f,
        var_rest: m0_inv,
    })
}
