//! Triangular covariance kernels K(t,t') = u(t) v(t') for t <= t', the time
//! change to a Brownian-motion model, and discrete covariance matrices.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::basis::{Interval, RegressionBasis, ScalarFn};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Number of grid points used for the numeric kernel validity checks.
const VALIDATION_GRID: usize = 1001;

/// Tag identifying the built-in kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind<T> {
    Brownian,
    Exponential { lambda: T },
    Custom,
}

enum InverseRule<T> {
    Analytic(ScalarFn<T>),
    Bisection,
}

impl<T> Clone for InverseRule<T> {
    fn clone(&self) -> Self {
        match self {
            InverseRule::Analytic(f) => InverseRule::Analytic(f.clone()),
            InverseRule::Bisection => InverseRule::Bisection,
        }
    }
}

/// Covariance kernel of product form with u, v and their derivatives.
#[derive(Clone)]
pub struct TriangularKernel<T> {
    u: ScalarFn<T>,
    v: ScalarFn<T>,
    u_dot: ScalarFn<T>,
    v_dot: ScalarFn<T>,
    u_ddot: Option<ScalarFn<T>>,
    v_ddot: Option<ScalarFn<T>>,
    inverse: InverseRule<T>,
    kind: KernelKind<T>,
}

impl<T> fmt::Debug for TriangularKernel<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriangularKernel")
            .field("kind", &self.kind)
            .finish()
    }
}

impl<T: Scalar> TriangularKernel<T> {
    /// Brownian motion: u(t) = t, v(t) = 1, K(t,t') = min(t,t').
    pub fn brownian() -> Self {
        Self {
            u: Arc::new(|t: T| t),
            v: Arc::new(|_| T::one()),
            u_dot: Arc::new(|_| T::one()),
            v_dot: Arc::new(|_| T::zero()),
            u_ddot: Some(Arc::new(|_| T::zero())),
            v_ddot: Some(Arc::new(|_| T::zero())),
            inverse: InverseRule::Analytic(Arc::new(|s: T| s)),
            kind: KernelKind::Brownian,
        }
    }

    /// Exponential kernel K(t,t') = exp(-lambda |t - t'|) with lambda > 0.
    pub fn exponential(lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(Error::InvalidKernel(format!(
                "lambda must be positive, got {:?}",
                lambda.to_f64()
            )));
        }
        let l = lambda;
        let two = real::<T>(2.0);
        Ok(Self {
            u: Arc::new(move |t: T| (l * t).exp()),
            v: Arc::new(move |t: T| (-l * t).exp()),
            u_dot: Arc::new(move |t: T| l * (l * t).exp()),
            v_dot: Arc::new(move |t: T| -l * (-l * t).exp()),
            u_ddot: Some(Arc::new(move |t: T| l * l * (l * t).exp())),
            v_ddot: Some(Arc::new(move |t: T| l * l * (-l * t).exp())),
            // q(t) = exp(2 lambda t), so q^{-1}(s) = ln(s) / (2 lambda)
            inverse: InverseRule::Analytic(Arc::new(move |s: T| s.ln() / (two * l))),
            kind: KernelKind::Exponential { lambda },
        })
    }

    /// Kernel from user-supplied u, v and their first derivatives. The
    /// inverse of q = u/v is computed by bisection unless one is attached
    /// with [`TriangularKernel::with_inverse`].
    pub fn custom(
        u: ScalarFn<T>,
        v: ScalarFn<T>,
        u_dot: ScalarFn<T>,
        v_dot: ScalarFn<T>,
    ) -> Self {
        Self {
            u,
            v,
            u_dot,
            v_dot,
            u_ddot: None,
            v_ddot: None,
            inverse: InverseRule::Bisection,
            kind: KernelKind::Custom,
        }
    }

    pub fn with_second_derivatives(mut self, u_ddot: ScalarFn<T>, v_ddot: ScalarFn<T>) -> Self {
        self.u_ddot = Some(u_ddot);
        self.v_ddot = Some(v_ddot);
        self
    }

    pub fn with_inverse(mut self, q_inverse: ScalarFn<T>) -> Self {
        self.inverse = InverseRule::Analytic(q_inverse);
        self
    }

    pub fn kind(&self) -> KernelKind<T> {
        self.kind
    }

    pub fn u(&self, t: T) -> T {
        (self.u)(t)
    }

    pub fn v(&self, t: T) -> T {
        (self.v)(t)
    }

    pub fn u_dot(&self, t: T) -> T {
        (self.u_dot)(t)
    }

    pub fn v_dot(&self, t: T) -> T {
        (self.v_dot)(t)
    }

    pub fn has_second_derivatives(&self) -> bool {
        self.u_ddot.is_some() && self.v_ddot.is_some()
    }

    pub fn u_ddot(&self, t: T) -> Option<T> {
        self.u_ddot.as_ref().map(|f| f(t))
    }

    pub fn v_ddot(&self, t: T) -> Option<T> {
        self.v_ddot.as_ref().map(|f| f(t))
    }

    /// K(t, t').
    pub fn k(&self, t: T, t2: T) -> T {
        let (lo, hi) = if t <= t2 { (t, t2) } else { (t2, t) };
        self.u(lo) * self.v(hi)
    }

    /// q(t) = u(t) / v(t).
    pub fn q(&self, t: T) -> T {
        self.u(t) / self.v(t)
    }

    /// dq/dt = (u' v - u v') / v^2.
    pub fn q_dot(&self, t: T) -> T {
        let v = self.v(t);
        (self.u_dot(t) * v - self.u(t) * self.v_dot(t)) / (v * v)
    }

    /// Inverse of q on the given interval, analytic where available and by
    /// monotone bisection otherwise.
    pub fn q_inverse(&self, s: T, interval: &Interval<T>) -> Result<T> {
        let tol_domain = real::<T>(1e-9) * (self.q(interval.b()) - self.q(interval.a())).abs();
        let (qa, qb) = (self.q(interval.a()), self.q(interval.b()));
        if s < qa - tol_domain || s > qb + tol_domain {
            return Err(Error::Domain(format!(
                "point {:?} outside transformed interval [{:?}, {:?}]",
                s.to_f64(),
                qa.to_f64(),
                qb.to_f64()
            )));
        }
        match &self.inverse {
            InverseRule::Analytic(inv) => Ok(inv(s)),
            InverseRule::Bisection => {
                let mut lo = interval.a();
                let mut hi = interval.b();
                let tol = real::<T>(1e-12) * interval.length().max(T::one());
                while hi - lo > tol {
                    let mid = (lo + hi) / real::<T>(2.0);
                    if self.q(mid) < s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok((lo + hi) / real::<T>(2.0))
            }
        }
    }

    /// Checks positivity of u and v and strict monotonicity of q on a
    /// uniform grid over the interval.
    pub fn validate(&self, interval: &Interval<T>) -> Result<()> {
        let grid = interval.grid(VALIDATION_GRID);
        if self.v(interval.a()) == T::zero() || self.v(interval.b()) == T::zero() {
            return Err(Error::InvalidKernel(
                "v vanishes at an interval endpoint".into(),
            ));
        }
        let mut prev_q: Option<T> = None;
        for (i, &t) in grid.iter().enumerate() {
            let interior = i > 0 && i + 1 < grid.len();
            if interior && !(self.u(t) > T::zero() && self.v(t) > T::zero()) {
                return Err(Error::InvalidKernel(format!(
                    "u and v must be positive inside the interval; failed at t = {:?}",
                    t.to_f64()
                )));
            }
            let q = self.q(t);
            if let Some(p) = prev_q {
                if !(q > p) {
                    return Err(Error::InvalidKernel(format!(
                        "q = u/v must be strictly increasing; failed near t = {:?}",
                        t.to_f64()
                    )));
                }
            }
            prev_q = Some(q);
            if !(self.u_dot(t) * self.v(t) - self.u(t) * self.v_dot(t) > T::zero()) {
                return Err(Error::InvalidKernel(format!(
                    "u'v - uv' must be positive; failed at t = {:?}",
                    t.to_f64()
                )));
            }
        }
        Ok(())
    }

    /// Covariance matrix (K(t_i, t_j))_{ij} at the design points.
    pub fn covariance_matrix(&self, design: &Design<T>) -> Result<DMatrix<T>> {
        let pts = design.points();
        for &t in pts {
            if self.v(t) == T::zero() {
                return Err(Error::InvalidDesign(format!(
                    "v vanishes at design point {:?}",
                    t.to_f64()
                )));
            }
        }
        let n = pts.len();
        let mut sigma = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let k = self.u(pts[i]) * self.v(pts[j]);
                sigma[(i, j)] = k;
                sigma[(j, i)] = k;
            }
        }
        Ok(sigma)
    }

    /// Time change to an equivalent model with Brownian-motion errors on
    /// [q(a), q(b)]: the regression functions become f(q^{-1}(s)) / v(q^{-1}(s)).
    pub fn doob_transform(
        &self,
        basis: &RegressionBasis<T>,
        interval: &Interval<T>,
    ) -> Result<TransformedModel<T>> {
        self.validate(interval)?;
        let t_interval = Interval::new(self.q(interval.a()), self.q(interval.b()))?;
        let kernel = self.clone();
        let iv = *interval;
        let back: ScalarFn<T> = Arc::new(move |s: T| {
            kernel
                .q_inverse(s, &iv)
                .expect("transformed point must lie inside the transformed interval")
        });

        let mut parts = Vec::with_capacity(basis.dim());
        for k in 0..basis.dim() {
            let b = basis.clone();
            let kern = self.clone();
            let back_v = back.clone();
            let value: ScalarFn<T> = Arc::new(move |s: T| {
                let t = back_v(s);
                b.eval_component(k, t) / kern.v(t)
            });
            let b = basis.clone();
            let kern = self.clone();
            let back_d = back.clone();
            // d/ds [f/v] = (f' v - f v') / (u' v - u v') evaluated at t = q^{-1}(s)
            let d1: ScalarFn<T> = Arc::new(move |s: T| {
                let t = back_d(s);
                let (v, vd) = (kern.v(t), kern.v_dot(t));
                let num = b.deriv_component(k, t) * v - b.eval_component(k, t) * vd;
                num / (kern.u_dot(t) * v - kern.u(t) * vd)
            });
            parts.push((value, d1));
        }
        let transformed_basis =
            RegressionBasis::custom(&format!("doob({})", basis.label()), parts)?;

        Ok(TransformedModel {
            basis: transformed_basis,
            interval: t_interval,
            original_interval: *interval,
            kernel: self.clone(),
        })
    }
}

/// A regression model mapped to Brownian-motion errors by the kernel's time
/// change. Estimation on this model is equivalent to estimation on the
/// original one; designs map back through the inverse time change.
#[derive(Clone)]
pub struct TransformedModel<T> {
    pub basis: RegressionBasis<T>,
    pub interval: Interval<T>,
    original_interval: Interval<T>,
    kernel: TriangularKernel<T>,
}

impl<T: Scalar> TransformedModel<T> {
    /// Applies q to a design in the original time scale.
    pub fn map_design_forward(&self, design: &Design<T>) -> Result<Design<T>> {
        design.map(|t| Ok(self.kernel.q(t)))
    }

    /// Applies q^{-1} pointwise to a design in the transformed time scale.
    pub fn map_design_back(&self, design_tilde: &Design<T>) -> Result<Design<T>> {
        design_tilde.map(|s| self.kernel.q_inverse(s, &self.original_interval))
    }

    pub fn original_interval(&self) -> &Interval<T> {
        &self.original_interval
    }

    /// Scaling 1/v(t_i) that takes original observations to the transformed
    /// model (the transformed response is Y_t / v(t)).
    pub fn observation_scale(&self, design: &Design<T>) -> Vec<T> {
        design
            .points()
            .iter()
            .map(|&t| T::one() / self.kernel.v(t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn brownian_values() {
        let k = TriangularKernel::<f64>::brownian();
        assert_abs_diff_eq!(k.k(1.0, 2.0), 1.0);
        assert_abs_diff_eq!(k.k(1.5, 1.5), 1.5);
        assert_abs_diff_eq!(k.q(3.25), 3.25);
    }

    #[test]
    fn exponential_values() {
        let k = TriangularKernel::exponential(1.0).unwrap();
        assert_abs_diff_eq!(k.k(1.0, 2.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.k(0.7, 0.7), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.q(1.0), (2.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(k.q(2.0), (4.0f64).exp(), epsilon = 1e-11);
        assert!(TriangularKernel::exponential(0.0).is_err());
        assert!(TriangularKernel::exponential(-1.0).is_err());
    }

    #[test]
    fn covariance_matrix_examples() {
        let k = TriangularKernel::<f64>::brownian();
        let d = Design::new(vec![1.0, 1.5, 2.0]).unwrap();
        let s = k.covariance_matrix(&d).unwrap();
        let expected = nalgebra::dmatrix![1.0, 1.0, 1.0; 1.0, 1.5, 1.5; 1.0, 1.5, 2.0];
        assert_abs_diff_eq!(s, expected, epsilon = 1e-15);

        let ke = TriangularKernel::exponential(1.0).unwrap();
        let d2 = Design::new(vec![0.0, 1.0]).unwrap();
        let s2 = ke.covariance_matrix(&d2).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(s2, nalgebra::dmatrix![1.0, e; e, 1.0], epsilon = 1e-15);
    }

    #[test]
    fn brownian_covariance_is_positive_definite() {
        let k = TriangularKernel::<f64>::brownian();
        let d = Design::new(vec![0.3, 0.9, 1.4, 2.2, 5.0]).unwrap();
        let s = k.covariance_matrix(&d).unwrap();
        assert!(nalgebra::Cholesky::new(s).is_some());
    }

    #[test]
    fn brownian_increments_are_independent() {
        // covariance of (Y_{t_i} - Y_{t_{i-1}}) is diagonal with entries t_i - t_{i-1}
        let k = TriangularKernel::<f64>::brownian();
        let pts = [0.5, 0.9, 1.7, 2.0];
        let d = Design::new(pts.to_vec()).unwrap();
        let s = k.covariance_matrix(&d).unwrap();
        for i in 1..pts.len() {
            for j in 1..pts.len() {
                let cov = s[(i, j)] - s[(i, j - 1)] - s[(i - 1, j)] + s[(i - 1, j - 1)];
                let expected = if i == j { pts[i] - pts[i - 1] } else { 0.0 };
                assert_abs_diff_eq!(cov, expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn doob_transform_identity_for_brownian() {
        let k = TriangularKernel::<f64>::brownian();
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let iv = Interval::new(1.0, 2.0).unwrap();
        let tm = k.doob_transform(&basis, &iv).unwrap();
        assert_abs_diff_eq!(tm.interval.a(), 1.0);
        assert_abs_diff_eq!(tm.interval.b(), 2.0);
        for &t in &[1.0, 1.3, 1.9] {
            assert_abs_diff_eq!(tm.basis.eval(t)[0], basis.eval(t)[0], epsilon = 1e-14);
            assert_abs_diff_eq!(tm.basis.deriv(t)[0], basis.deriv(t)[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn doob_transform_exponential_interval() {
        let k = TriangularKernel::exponential(1.0).unwrap();
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let iv = Interval::new(1.0, 2.0).unwrap();
        let tm = k.doob_transform(&basis, &iv).unwrap();
        assert_abs_diff_eq!(tm.interval.a(), (2.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(tm.interval.b(), (4.0f64).exp(), epsilon = 1e-11);
        // endpoint maps back exactly
        let d = Design::new(vec![(2.0f64).exp(), (3.0f64).exp(), (4.0f64).exp()]).unwrap();
        let back = tm.map_design_back(&d).unwrap();
        assert_abs_diff_eq!(back.points()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.points()[1], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(back.points()[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn map_design_back_rejects_outside_points() {
        let k = TriangularKernel::exponential(1.0).unwrap();
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        let iv = Interval::new(1.0, 2.0).unwrap();
        let tm = k.doob_transform(&basis, &iv).unwrap();
        let d = Design::new(vec![1.0, (3.0f64).exp()]).unwrap();
        assert!(matches!(tm.map_design_back(&d), Err(Error::Domain(_))));
    }

    #[test]
    fn custom_kernel_bisection_inverse_round_trip() {
        // u = t^2, v = 1 on [1, 2]: q = t^2, strictly increasing
        let k = TriangularKernel::custom(
            Arc::new(|t: f64| t * t),
            Arc::new(|_| 1.0),
            Arc::new(|t: f64| 2.0 * t),
            Arc::new(|_| 0.0),
        );
        let iv = Interval::new(1.0, 2.0).unwrap();
        k.validate(&iv).unwrap();
        for &t in &[1.0, 1.25, 1.8, 2.0] {
            let s = k.q(t);
            let back = k.q_inverse(s, &iv).unwrap();
            assert_abs_diff_eq!(back, t, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_monotone_q_rejected() {
        // u = sin t over [1, 5] is not monotone against v = 1
        let k = TriangularKernel::custom(
            Arc::new(|t: f64| t.sin() + 2.0),
            Arc::new(|_| 1.0),
            Arc::new(|t: f64| t.cos()),
            Arc::new(|_| 0.0),
        );
        let iv = Interval::new(1.0, 5.0).unwrap();
        assert!(matches!(k.validate(&iv), Err(Error::InvalidKernel(_))));
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_psd(raw in proptest::collection::vec(0.05f64..5.0, 3..7)) {
            let mut pts = raw;
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            prop_assume!(pts.len() >= 2);
            let d = Design::new(pts).unwrap();
            for k in [TriangularKernel::<f64>::brownian(), TriangularKernel::exponential(0.7).unwrap()] {
                let s = k.covariance_matrix(&d).unwrap();
                prop_assert!((s.clone() - s.transpose()).amax() < 1e-14);
                let ev = crate::linalg::sym_eigenvalues(&s);
                let largest = ev[ev.len()-1];
                prop_assert!(ev[0] >= -1e-10 * largest.max(1.0));
            }
        }

        #[test]
        fn product_form_matches_min_representation(t in 0.1f64..4.0, s in 0.1f64..4.0) {
            // K(t,s) computed from u v equals v(t) v(s) min(q(t), q(s))
            for k in [TriangularKernel::<f64>::brownian(), TriangularKernel::exponential(1.3).unwrap()] {
                let direct = k.k(t, s);
                let alt = k.v(t) * k.v(s) * k.q(t).min(k.q(s));
                prop_assert!((direct - alt).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }

        #[test]
        fn doob_round_trip_is_identity(raw in proptest::collection::vec(1.01f64..1.99, 2..6)) {
            let mut pts = raw;
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-5);
            prop_assume!(pts.len() >= 2);
            let k = TriangularKernel::exponential(1.0).unwrap();
            let basis = RegressionBasis::polynomial(&[1]).unwrap();
            let iv = Interval::new(1.0, 2.0).unwrap();
            let tm = k.doob_transform(&basis, &iv).unwrap();
            let d = Design::new(pts.clone()).unwrap();
            let fwd = tm.map_design_forward(&d).unwrap();
            let back = tm.map_design_back(&fwd).unwrap();
            for (x, y) in back.points().iter().zip(&pts) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
