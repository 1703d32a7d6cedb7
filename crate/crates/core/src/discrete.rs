//! The discrete approximating estimator: optimal increment weights for the
//! one- and multi-parameter Brownian-motion model, the scalar design
//! criterion with its efficiency and upper bound, and the trace of the mean
//! squared error against the continuous-time estimator.

use nalgebra::{DMatrix, DVector};

use crate::basis::{Interval, RegressionBasis};
use crate::continuous;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{real, Scalar};

/// Tolerance (relative) for the unbiasedness identity check.
const UNBIASED_TOL: f64 = 1e-9;

/// Linear estimator C^{-1} { sum_i mu_i (Y_{t_i} - Y_{t_{i-1}}) + f(a) Y_a / a }
/// with per-increment vector weights mu_2, ..., mu_n.
#[derive(Clone, Debug)]
pub struct LinearEstimator<T> {
    design: Design<T>,
    interval: Interval<T>,
    /// mu_i for i = 2..n (index 0 holds mu_2).
    weights: Vec<DVector<T>>,
    c: DMatrix<T>,
    c_inv: DMatrix<T>,
    m_matrix: DMatrix<T>,
    b_matrix: DMatrix<T>,
    b_inverse: DMatrix<T>,
    f_a: DVector<T>,
    used_pseudo_inverse: bool,
}

fn increments<T: Scalar>(basis: &RegressionBasis<T>, design: &Design<T>) -> Vec<(T, DVector<T>)> {
    let pts = design.points();
    (1..pts.len())
        .map(|i| (pts[i] - pts[i - 1], basis.eval(pts[i]) - basis.eval(pts[i - 1])))
        .collect()
}

/// B = sum_i (Delta f_i)(Delta f_i)^T / Delta t_i, accumulated through the
/// normalized increments Delta f / sqrt(Delta t) for conditioning.
fn b_matrix<T: Scalar>(basis: &RegressionBasis<T>, design: &Design<T>) -> DMatrix<T> {
    let m = basis.dim();
    let mut b = DMatrix::zeros(m, m);
    for (dt, df) in increments(basis, design) {
        let beta = df / dt.sqrt();
        b += &beta * beta.transpose();
    }
    b
}

fn validate_inputs<T: Scalar>(design: &Design<T>, interval: &Interval<T>) -> Result<()> {
    interval.require_positive_start()?;
    design.check_spans(interval)
}

impl<T: Scalar> LinearEstimator<T> {
    /// Optimal weights for a one-parameter model:
    /// mu_i = kappa (f(t_i) - f(t_{i-1})) / (t_i - t_{i-1}) with
    /// kappa = int f'^2 / sum (Delta f)^2 / Delta t.
    pub fn optimal_weights_1d(
        basis: &RegressionBasis<T>,
        design: &Design<T>,
        interval: &Interval<T>,
    ) -> Result<Self> {
        if basis.dim() != 1 {
            return Err(Error::InvalidInput(format!(
                "one-parameter constructor called with m = {}",
                basis.dim()
            )));
        }
        validate_inputs(design, interval)?;
        let b = b_matrix(basis, design);
        if b[(0, 0)] <= T::zero() {
            return Err(Error::SingularWeights(
                "all increments of f vanish; the weight normalization is undefined".into(),
            ));
        }
        let m_matrix = basis.derivative_gram(interval)?;
        let kappa = m_matrix[(0, 0)] / b[(0, 0)];
        let weights = increments(basis, design)
            .into_iter()
            .map(|(dt, df)| df * (kappa / dt))
            .collect();
        Self::assemble(basis, design, interval, weights, m_matrix, b, false)
    }

    /// Optimal vector weights mu_i = M B^{-1} (f(t_i) - f(t_{i-1})) / (t_i - t_{i-1}).
    /// A singular B falls back to its Moore-Penrose inverse; if the
    /// unbiasedness identity still fails, the constraint is infeasible.
    pub fn optimal_weights_multi(
        basis: &RegressionBasis<T>,
        design: &Design<T>,
        interval: &Interval<T>,
    ) -> Result<Self> {
        validate_inputs(design, interval)?;
        let b = b_matrix(basis, design);
        let m_matrix = basis.derivative_gram(interval)?;
        let (b_inv, used_pseudo) = match linalg::cholesky(&b, "increment Gram matrix B") {
            Ok(chol) => (chol.inverse(), false),
            Err(_) => (linalg::psd_pseudo_inverse(&b, linalg::rank_tol()), true),
        };
        let mb = &m_matrix * &b_inv;
        let weights: Vec<DVector<T>> = increments(basis, design)
            .into_iter()
            .map(|(dt, df)| &mb * df / dt)
            .collect();
        let est = Self::assemble_with_binv(
            basis, design, interval, weights, m_matrix, b, b_inv, used_pseudo,
        )?;
        let residual = est.unbiasedness_residual(basis);
        let scale = est.m_matrix.amax().max(T::one());
        if residual > real::<T>(UNBIASED_TOL) * scale {
            return Err(Error::InfeasibleUnbiasedness(format!(
                "identity residual {:e} with {} increments for {} parameters",
                residual.to_f64().unwrap_or(f64::NAN),
                design.n() - 1,
                basis.dim()
            )));
        }
        Ok(est)
    }

    /// Estimator with caller-supplied weights (diagnostics and experiments);
    /// no unbiasedness is enforced.
    pub fn with_weights(
        basis: &RegressionBasis<T>,
        design: &Design<T>,
        interval: &Interval<T>,
        weights: Vec<DVector<T>>,
    ) -> Result<Self> {
        validate_inputs(design, interval)?;
        if weights.len() != design.n() - 1 {
            return Err(Error::InvalidInput(format!(
                "need one weight vector per increment: {} != {}",
                weights.len(),
                design.n() - 1
            )));
        }
        let b = b_matrix(basis, design);
        let m_matrix = basis.derivative_gram(interval)?;
        Self::assemble(basis, design, interval, weights, m_matrix, b, false)
    }

    fn assemble(
        basis: &RegressionBasis<T>,
        design: &Design<T>,
        interval: &Interval<T>,
        weights: Vec<DVector<T>>,
        m_matrix: DMatrix<T>,
        b: DMatrix<T>,
        used_pseudo_inverse: bool,
    ) -> Result<Self> {
        let b_inv = match linalg::cholesky(&b, "increment Gram matrix B") {
            Ok(chol) => chol.inverse(),
            Err(_) => linalg::psd_pseudo_inverse(&b, linalg::rank_tol()),
        };
        Self::assemble_with_binv(
            basis,
            design,
            interval,
            weights,
            m_matrix,
            b,
            b_inv,
            used_pseudo_inverse,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble_with_binv(
        basis: &RegressionBasis<T>,
        design: &Design<T>,
        interval: &Interval<T>,
        weights: Vec<DVector<T>>,
        m_matrix: DMatrix<T>,
        b: DMatrix<T>,
        b_inverse: DMatrix<T>,
        used_pseudo_inverse: bool,
    ) -> Result<Self> {
        let f_a = basis.eval(interval.a());
        let c = &m_matrix + &f_a * f_a.transpose() / interval.a();
        let c_inv = linalg::spd_inverse(&c, "model matrix C")?;
        Ok(Self {
            design: design.clone(),
            interval: *interval,
            weights,
            c,
            c_inv,
            m_matrix,
            b_matrix: b,
            b_inverse,
            f_a,
            used_pseudo_inverse,
        })
    }

    pub fn design(&self) -> &Design<T> {
        &self.design
    }

    pub fn interval(&self) -> &Interval<T> {
        &self.interval
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// mu_2, ..., mu_n.
    pub fn weights(&self) -> &[DVector<T>] {
        &self.weights
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn c_inv(&self) -> &DMatrix<T> {
        &self.c_inv
    }

    pub fn m_matrix(&self) -> &DMatrix<T> {
        &self.m_matrix
    }

    pub fn b_matrix(&self) -> &DMatrix<T> {
        &self.b_matrix
    }

    pub fn used_pseudo_inverse(&self) -> bool {
        self.used_pseudo_inverse
    }

    /// Max-norm residual of the unbiasedness identity
    /// sum_i mu_i (f(t_i) - f(t_{i-1}))^T = int f' f'^T.
    pub fn unbiasedness_residual(&self, basis: &RegressionBasis<T>) -> T {
        let m = self.dim();
        let mut s = DMatrix::zeros(m, m);
        for ((_, df), mu) in increments(basis, &self.design).into_iter().zip(&self.weights) {
            s += mu * df.transpose();
        }
        linalg::max_abs_diff(&s, &self.m_matrix)
    }

    /// True when the unbiasedness identity holds to the standard tolerance.
    pub fn is_unbiased(&self, basis: &RegressionBasis<T>) -> bool {
        self.unbiasedness_residual(basis)
            <= real::<T>(UNBIASED_TOL) * self.m_matrix.amax().max(T::one())
    }

    /// Exact sampling variance of the estimator under Brownian-motion errors:
    /// C^{-1} ( sum_i mu_i mu_i^T Delta t_i + f(a) f(a)^T / a ) C^{-1}.
    pub fn variance(&self) -> DMatrix<T> {
        let m = self.dim();
        let mut inner = &self.f_a * self.f_a.transpose() / self.interval.a();
        let mut gamma_sum = DMatrix::zeros(m, m);
        for (gap, mu) in self.design.gaps().into_iter().zip(&self.weights) {
            gamma_sum += mu * mu.transpose() * gap;
        }
        inner += gamma_sum;
        &self.c_inv * inner * &self.c_inv
    }

    /// Mean squared error matrix against the continuous-time estimator for an
    /// unbiased weight choice: C^{-1} (M B^{-1} M - M) C^{-1}.
    pub fn mse_matrix(&self) -> DMatrix<T> {
        let inner = &self.m_matrix * &self.b_inverse * &self.m_matrix - &self.m_matrix;
        &self.c_inv * inner * &self.c_inv
    }

    /// Trace of [`LinearEstimator::mse_matrix`].
    pub fn mse_trace(&self) -> T {
        self.mse_matrix().trace()
    }

    /// Efficiency tr Var_continuous / tr Var(estimator); the denominator uses
    /// the variance decomposition Var = C^{-1} + MSE.
    pub fn efficiency(&self) -> T {
        let var = &self.c_inv + self.mse_matrix();
        self.c_inv.trace() / var.trace()
    }

    /// The bias outer product of the mean-squared-error formula for an
    /// arbitrary (possibly biased) weight choice at the given parameter:
    /// C^{-1} S theta theta^T S^T C^{-1} with S = M - sum_i mu_i Delta f_i^T.
    pub fn bias_outer(&self, basis: &RegressionBasis<T>, theta: &DVector<T>) -> DMatrix<T> {
        let mut s = self.m_matrix.clone();
        for ((_, df), mu) in increments(basis, &self.design).into_iter().zip(&self.weights) {
            s -= mu * df.transpose();
        }
        let v = &self.c_inv * (&s * theta);
        &v * v.transpose()
    }

    /// Coefficient of each observation Y_{t_i} when the estimator is written
    /// as a plain weighted sum of observations.
    pub fn observation_coefficients(&self) -> Vec<DVector<T>> {
        let n = self.design.n();
        let m = self.dim();
        let mut coeffs = vec![DVector::<T>::zeros(m); n];
        coeffs[0] = &self.f_a / self.interval.a();
        for (i, mu) in self.weights.iter().enumerate() {
            coeffs[i + 1] += mu;
            coeffs[i] -= mu;
        }
        coeffs.into_iter().map(|w| &self.c_inv * w).collect()
    }

    /// Applies the estimator to one column of observations per replicate.
    /// `observations` is n x r; the result is m x r.
    pub fn apply(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>> {
        let n = self.design.n();
        if observations.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "observation rows {} != design size {}",
                observations.nrows(),
                n
            )));
        }
        let r = observations.ncols();
        let m = self.dim();
        let mut out = DMatrix::zeros(m, r);
        for col in 0..r {
            let y = observations.column(col);
            let mut acc = &self.f_a * (y[0] / self.interval.a());
            for (i, mu) in self.weights.iter().enumerate() {
                acc += mu * (y[i + 1] - y[i]);
            }
            out.set_column(col, &(&self.c_inv * acc));
        }
        Ok(out)
    }
}

/// Scalar design criterion Phi = int f'^2 { sum (Delta f)^2 / Delta t }^{-1} - 1
/// for one-parameter models; zero exactly when the increment sum attains the
/// integral.
pub fn phi_criterion<T: Scalar>(
    basis: &RegressionBasis<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<T> {
    if basis.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "the scalar criterion needs m = 1, got {}",
            basis.dim()
        )));
    }
    design.check_spans(interval)?;
    let b = b_matrix(basis, design)[(0, 0)];
    if b <= T::zero() {
        return Err(Error::SingularWeights(
            "sum of squared increments vanishes".into(),
        ));
    }
    let integral = basis.derivative_gram(interval)?[(0, 0)];
    Ok(integral / b - T::one())
}

/// Efficiency of the optimally weighted one-parameter estimator:
/// (1 + Phi / (1 + (f(a)^2 / a) / int f'^2))^{-1}.
pub fn efficiency_1d<T: Scalar>(
    basis: &RegressionBasis<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<T> {
    interval.require_positive_start()?;
    let phi = phi_criterion(basis, design, interval)?;
    let integral = basis.derivative_gram(interval)?[(0, 0)];
    let fa = basis.eval(interval.a())[0];
    let boundary = fa * fa / interval.a();
    Ok(T::one() / (T::one() + phi / (T::one() + boundary / integral)))
}

/// Grid-based upper bound for Phi:
/// (n-1) max dt^2 / (H + (n-1) max dt^2) with H = int f'^2 / (2 max|f'| max|f''|).
/// Returns zero when f'' vanishes identically (then Phi = 0 exactly).
pub fn phi_upper_bound<T: Scalar>(
    basis: &RegressionBasis<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<T> {
    if basis.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "the scalar bound needs m = 1, got {}",
            basis.dim()
        )));
    }
    if !basis.has_second_derivs() {
        return Err(Error::MissingCapability(
            "the bound needs a second derivative of the regression function".into(),
        ));
    }
    design.check_spans(interval)?;
    let grid = interval.grid(1001);
    let mut max_d1 = T::zero();
    let mut max_d2 = T::zero();
    for &t in &grid {
        max_d1 = max_d1.max(basis.deriv(t)[0].abs());
        max_d2 = max_d2.max(basis.second_deriv(t).unwrap()[0].abs());
    }
    if max_d1 * max_d2 == T::zero() {
        return Ok(T::zero());
    }
    let integral = basis.derivative_gram(interval)?[(0, 0)];
    let h = integral / (real::<T>(2.0) * max_d1 * max_d2);
    let max_gap = design
        .gaps()
        .into_iter()
        .fold(T::zero(), |acc, g| acc.max(g));
    let lead = crate::scalar::real_usize::<T>(design.n() - 1) * max_gap * max_gap;
    Ok(lead / (h + lead))
}

/// tr Var_continuous / tr Var for any estimator variance against a reference.
pub fn efficiency_against<T: Scalar>(variance: &DMatrix<T>, reference_c_inv: &DMatrix<T>) -> T {
    reference_c_inv.trace() / variance.trace()
}

/// Fine-grid reference estimator: the optimally weighted estimator on a
/// uniform grid dense enough to stand in for the continuous-time one.
pub fn fine_grid_reference<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
    n: usize,
) -> Result<LinearEstimator<T>> {
    let design = Design::equidistant(interval, n)?;
    LinearEstimator::optimal_weights_multi(basis, &design, interval)
}

/// The continuous-time variance from the same inputs, for efficiency ratios.
pub fn continuous_variance<T: Scalar>(
    basis: &RegressionBasis<T>,
    interval: &Interval<T>,
) -> Result<DMatrix<T>> {
    Ok(continuous::c_matrix(basis, interval)?.c_inv)
}

/// Direct evaluation of the scalar-criterion sum used by Phi; exposed for the
/// closed-form comparisons in the tests.
pub fn increment_sum<T: Scalar>(basis: &RegressionBasis<T>, design: &Design<T>) -> T {
    b_matrix(basis, design)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn iv(a: f64, b: f64) -> Interval<f64> {
        Interval::new(a, b).unwrap()
    }

    fn uniform(a: f64, b: f64, n: usize) -> Design<f64> {
        Design::equidistant(&iv(a, b), n).unwrap()
    }

    #[test]
    fn linear_model_weights_are_one() {
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        let d = Design::new(vec![1.0, 1.3, 1.45, 2.0]).unwrap();
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        for mu in est.weights() {
            assert_abs_diff_eq!(mu[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_three_point_weights() {
        // f = t^2 at (1, 1.5, 2): kappa = (28/3) / 9.25, mu_2 = kappa 2.5, mu_3 = kappa 3.5
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let d = Design::new(vec![1.0, 1.5, 2.0]).unwrap();
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let kappa = (28.0 / 3.0) / 9.25;
        assert_abs_diff_eq!(est.weights()[0][0], kappa * 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(est.weights()[1][0], kappa * 3.5, epsilon = 1e-12);
        assert!(est.unbiasedness_residual(&basis) < 1e-12);
    }

    #[test]
    fn constant_function_rejected() {
        let basis = RegressionBasis::polynomial(&[0]).unwrap();
        let d = uniform(1.0, 2.0, 4);
        assert!(matches!(
            LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)),
            Err(Error::SingularWeights(_))
        ));
    }

    #[test]
    fn phi_zero_for_linear_model() {
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        for d in [
            uniform(1.0, 2.0, 5),
            Design::new(vec![1.0, 1.05, 1.9, 2.0]).unwrap(),
        ] {
            let phi = phi_criterion(&basis, &d, &iv(1.0, 2.0)).unwrap();
            assert_abs_diff_eq!(phi, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn phi_quadratic_closed_form() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        for (a, b, n) in [(1.0, 2.0, 5usize), (1.0, 2.0, 10), (0.5, 3.0, 7)] {
            let phi = phi_criterion(&basis, &uniform(a, b, n), &iv(a, b)).unwrap();
            let nn = (n - 1) as f64;
            let closed =
                (a - b).powi(3) / (4.0 * nn * nn * (a.powi(3) - b.powi(3)) - (a - b).powi(3));
            assert_abs_diff_eq!(phi, closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn phi_decays_quadratically() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let interval = iv(1.0, 2.0);
        let mut pts = Vec::new();
        for n in [5usize, 10, 20, 40] {
            let phi = phi_criterion(&basis, &uniform(1.0, 2.0, n), &interval).unwrap();
            pts.push(((n as f64).ln(), phi.ln()));
        }
        let slope = {
            let xm = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let ym = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let num: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
            let den: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
            num / den
        };
        assert!((-2.2..=-1.8).contains(&slope), "slope {slope}");
    }

    #[test]
    fn efficiency_table_values() {
        let interval = iv(1.0, 2.0);
        let d = uniform(1.0, 2.0, 5);

        let quad_basis = RegressionBasis::polynomial(&[2]).unwrap();
        let e = efficiency_1d(&quad_basis, &d, &interval).unwrap();
        assert_abs_diff_eq!(e, 13857.0 / 13885.0, epsilon = 1e-12);

        let linear = RegressionBasis::polynomial(&[1]).unwrap();
        assert_abs_diff_eq!(
            efficiency_1d(&linear, &d, &interval).unwrap(),
            1.0,
            epsilon = 1e-13
        );

        let shifted = RegressionBasis::affine_shift(
            RegressionBasis::<f64>::polynomial(&[2]).unwrap(),
            -0.5,
        );
        let e = efficiency_1d(&shifted, &d, &interval).unwrap();
        assert_abs_diff_eq!(e, 0.99782596, epsilon = 1e-7);
    }

    #[test]
    fn phi_bound_examples() {
        let interval = iv(1.0, 2.0);
        let d = uniform(1.0, 2.0, 5);
        let quad_basis = RegressionBasis::polynomial(&[2]).unwrap();
        let bound = phi_upper_bound(&quad_basis, &d, &interval).unwrap();
        assert_abs_diff_eq!(bound, 0.3, epsilon = 1e-9);
        let phi = phi_criterion(&quad_basis, &d, &interval).unwrap();
        assert!(phi <= bound);

        let linear = RegressionBasis::polynomial(&[1]).unwrap();
        assert_abs_diff_eq!(
            phi_upper_bound(&linear, &d, &interval).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn phi_bound_holds_for_one_parameter_bases(){
        let interval = iv(1.0, 2.0);
        for powers in [[1u32], [2], [3], [4]] {
            let basis = RegressionBasis::polynomial(&powers).unwrap();
            for n in [3usize, 5, 9] {
                let d = uniform(1.0, 2.0, n);
                let phi = phi_criterion(&basis, &d, &interval).unwrap();
                let bound = phi_upper_bound(&basis, &d, &interval).unwrap();
                assert!(phi <= bound + 1e-12, "powers {powers:?} n {n}");
            }
        }
    }

    #[test]
    fn multi_reduces_to_1d() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let d = Design::new(vec![1.0, 1.2, 1.7, 2.0]).unwrap();
        let interval = iv(1.0, 2.0);
        let a = LinearEstimator::optimal_weights_1d(&basis, &d, &interval).unwrap();
        let b = LinearEstimator::optimal_weights_multi(&basis, &d, &interval).unwrap();
        for (wa, wb) in a.weights().iter().zip(b.weights()) {
            assert_abs_diff_eq!(wa[0], wb[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn multi_identity_for_cubic_model() {
        let basis = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est =
            LinearEstimator::optimal_weights_multi(&basis, &d, &iv(1.0, 2.0)).unwrap();
        assert!(est.unbiasedness_residual(&basis) < 1e-10);
        assert!(!est.used_pseudo_inverse());
    }

    #[test]
    fn pseudo_inverse_feasible_when_ranges_align() {
        // f = (1, 1+t) on [1,2] with n = 2: B and M are both rank one with
        // matching range, so the pseudo-inverse weights stay unbiased.
        let basis = RegressionBasis::custom(
            "1, 1+t",
            vec![
                (
                    std::sync::Arc::new(|_| 1.0) as crate::basis::ScalarFn<f64>,
                    std::sync::Arc::new(|_| 0.0) as crate::basis::ScalarFn<f64>,
                ),
                (
                    std::sync::Arc::new(|t: f64| 1.0 + t),
                    std::sync::Arc::new(|_| 1.0),
                ),
            ],
        )
        .unwrap();
        let d = Design::new(vec![1.0, 2.0]).unwrap();
        let est = LinearEstimator::optimal_weights_multi(&basis, &d, &iv(1.0, 2.0)).unwrap();
        assert!(est.used_pseudo_inverse());
        assert!(est.is_unbiased(&basis));
    }

    #[test]
    fn pseudo_inverse_infeasible_when_underdetermined() {
        // three parameters, one increment: the unbiasedness identity cannot hold
        let basis = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let d = Design::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            LinearEstimator::optimal_weights_multi(&basis, &d, &iv(1.0, 2.0)),
            Err(Error::InfeasibleUnbiasedness(_))
        ));
    }

    #[test]
    fn mse_trace_zero_for_linear_model() {
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        let d = Design::new(vec![1.0, 1.31, 1.62, 2.0]).unwrap();
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(est.mse_trace(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn mse_trace_scalar_identity() {
        // m = 1: tr MSE = C^{-2} int f'^2 Phi
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let interval = iv(1.0, 2.0);
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &interval).unwrap();
        let phi = phi_criterion(&basis, &d, &interval).unwrap();
        let expected = (3.0 / 31.0_f64).powi(2) * (28.0 / 3.0) * phi;
        assert_abs_diff_eq!(est.mse_trace(), expected, epsilon = 1e-12);
    }

    #[test]
    fn mse_trace_monotone_under_refinement() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let interval = iv(1.0, 2.0);
        let mut last = f64::INFINITY;
        for n in [3usize, 5, 9, 17] {
            let est =
                LinearEstimator::optimal_weights_1d(&basis, &uniform(1.0, 2.0, n), &interval)
                    .unwrap();
            let t = est.mse_trace();
            assert!(t <= last + 1e-15, "n = {n}: {t} > {last}");
            assert!(t >= 0.0);
            last = t;
        }
    }

    #[test]
    fn variance_decomposition_identity() {
        // Var computed from increment variances equals C^{-1} + MSE matrix
        let basis = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_multi(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let direct = est.variance();
        let decomposed = est.c_inv() + est.mse_matrix();
        assert!(linalg::max_abs_diff(&direct, &decomposed) < 1e-9);
    }

    #[test]
    fn efficiency_multi_trivial_and_table() {
        let linear = RegressionBasis::polynomial(&[1]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_multi(&linear, &d, &iv(1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(est.efficiency(), 1.0, epsilon = 1e-12);

        let cubic = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let est = LinearEstimator::optimal_weights_multi(&cubic, &d, &iv(1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(est.efficiency(), 0.9382, epsilon = 5e-5);
    }

    #[test]
    fn apply_recovers_parameters_on_noiseless_data() {
        let basis = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_multi(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let theta = dvector![0.5, -1.25, 2.0];
        let ys = DMatrix::from_fn(5, 1, |i, _| theta.dot(&basis.eval(d.points()[i])));
        let theta_hat = est.apply(&ys).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(theta_hat[(k, 0)], theta[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn apply_telescopes_for_linear_model() {
        // f(t) = t: the estimate is Y_b / b whatever the interior observations are
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let ys = DMatrix::from_row_slice(5, 1, &[0.3, 9.9, -4.0, 2.2, 3.0]);
        let out = est.apply(&ys).unwrap();
        assert_abs_diff_eq!(out[(0, 0)], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn apply_rejects_size_mismatch() {
        let basis = RegressionBasis::polynomial(&[1]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let ys = DMatrix::from_element(4, 1, 0.0);
        assert!(est.apply(&ys).is_err());
    }

    #[test]
    fn observation_coefficients_match_increment_form() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let coeffs = est.observation_coefficients();
        let ys = DMatrix::from_row_slice(5, 1, &[1.4, -0.2, 0.8, 2.0, -1.1]);
        let direct = est.apply(&ys).unwrap();
        let mut acc = 0.0;
        for (i, c) in coeffs.iter().enumerate() {
            acc += c[0] * ys[(i, 0)];
        }
        assert_abs_diff_eq!(acc, direct[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn loewner_optimality_spot_check() {
        // random unbiasedness-preserving perturbations never improve the MSE matrix
        use rand::Rng;
        use rand::SeedableRng;
        let basis = RegressionBasis::polynomial(&[1, 2, 3]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let interval = iv(1.0, 2.0);
        let optimal = LinearEstimator::optimal_weights_multi(&basis, &d, &interval).unwrap();
        let optimal_mse = optimal.mse_matrix();
        let b_inv = linalg::spd_inverse(optimal.b_matrix(), "B").unwrap();
        let betas: Vec<DVector<f64>> = increments(&basis, &d)
            .into_iter()
            .map(|(dt, df)| df / dt.sqrt())
            .collect();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            // project random gamma offsets onto the unbiasedness constraint
            let etas: Vec<DVector<f64>> = (0..4)
                .map(|_| DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5) * 0.2)
                .collect();
            let mut r = DMatrix::<f64>::zeros(3, 3);
            for (eta, beta) in etas.iter().zip(&betas) {
                r += eta * beta.transpose();
            }
            let gaps = d.gaps();
            let weights: Vec<DVector<f64>> = optimal
                .weights()
                .iter()
                .zip(etas.iter().zip(&betas))
                .zip(&gaps)
                .map(|((mu, (eta, beta)), &dt)| {
                    mu + (eta - &r * &b_inv * beta) / dt.sqrt()
                })
                .collect();
            let perturbed =
                LinearEstimator::with_weights(&basis, &d, &interval, weights).unwrap();
            assert!(perturbed.is_unbiased(&basis));
            let diff = perturbed.variance() - (optimal_mse.clone() + optimal.c_inv());
            let min_ev = linalg::min_eigenvalue(&diff);
            assert!(min_ev >= -1e-9, "perturbation improved the MSE: {min_ev}");
        }
    }

    #[test]
    fn bias_outer_vanishes_for_unbiased_weights() {
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let d = uniform(1.0, 2.0, 5);
        let est = LinearEstimator::optimal_weights_1d(&basis, &d, &iv(1.0, 2.0)).unwrap();
        let theta = dvector![3.0];
        assert!(est.bias_outer(&basis, &theta).amax() < 1e-20);
        // scaled weights break unbiasedness and the term becomes visible
        let scaled: Vec<_> = est.weights().iter().map(|w| w * 1.1).collect();
        let biased =
            LinearEstimator::with_weights(&basis, &d, &iv(1.0, 2.0), scaled).unwrap();
        assert!(biased.bias_outer(&basis, &theta).amax() > 1e-3);
    }
}
