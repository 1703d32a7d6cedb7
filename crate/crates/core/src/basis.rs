//! Regression bases: vector-valued regression functions with analytic
//! derivatives, plus rank diagnostics for the derivative Gram matrix.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg;
use crate::quad;
use crate::scalar::{real, Scalar};

/// Shared scalar function handle; cheap to clone, safe to call from threads.
pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Closed design interval [a, b].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    a: T,
    b: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidInterval(format!(
                "left endpoint must be below right endpoint, got [{:?}, {:?}]",
                a.to_f64(),
                b.to_f64()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    /// Non-degenerate estimation requires a strictly positive left endpoint.
    pub fn require_positive_start(&self) -> Result<()> {
        if self.a <= T::zero() {
            return Err(Error::InvalidInterval(format!(
                "left endpoint must be positive for the non-degenerate formulas, got {:?}; \
                 use the degenerate-case operations for a = 0",
                self.a.to_f64()
            )));
        }
        Ok(())
    }

    /// Uniform grid with `count` points including both endpoints.
    pub fn grid(&self, count: usize) -> Vec<T> {
        let step = self.length() / crate::scalar::real_usize::<T>(count - 1);
        (0..count)
            .map(|i| {
                if i + 1 == count {
                    self.b
                } else {
                    self.a + step * crate::scalar::real_usize::<T>(i)
                }
            })
            .collect()
    }
}

struct Component<T> {
    value: ScalarFn<T>,
    d1: ScalarFn<T>,
    d2: Option<ScalarFn<T>>,
}

impl<T> Clone for Component<T> {
    fn clone(&self) -> Self {
        Self {
            value: self.value.clone(),
            d1: self.d1.clone(),
            d2: self.d2.clone(),
        }
    }
}

/// Vector of regression functions f with analytic first derivative, and
/// optional analytic second derivative for the operations that need one.
#[derive(Clone)]
pub struct RegressionBasis<T> {
    components: Vec<Component<T>>,
    label: String,
}

impl<T> fmt::Debug for RegressionBasis<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionBasis")
            .field("label", &self.label)
            .field("dim", &self.components.len())
            .finish()
    }
}

/// Result of the derivative-Gram rank diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GramRank {
    pub rank: usize,
    pub has_intercept: bool,
}

impl<T: Scalar> RegressionBasis<T> {
    /// Monomial basis t^p for each power in `powers`.
    pub fn polynomial(powers: &[u32]) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::InvalidBasis("power list is empty".into()));
        }
        let mut seen = powers.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != powers.len() {
            return Err(Error::InvalidBasis(format!(
                "duplicate powers in {powers:?}"
            )));
        }
        let components = powers
            .iter()
            .map(|&p| {
                let value: ScalarFn<T> = Arc::new(move |t: T| t.powi(p as i32));
                let d1: ScalarFn<T> = Arc::new(move |t: T| {
                    if p == 0 {
                        T::zero()
                    } else {
                        crate::scalar::real_usize::<T>(p as usize) * t.powi(p as i32 - 1)
                    }
                });
                let d2: ScalarFn<T> = Arc::new(move |t: T| {
                    if p < 2 {
                        T::zero()
                    } else {
                        crate::scalar::real_usize::<T>((p * (p - 1)) as usize)
                            * t.powi(p as i32 - 2)
                    }
                });
                Component {
                    value,
                    d1,
                    d2: Some(d2),
                }
            })
            .collect();
        Ok(Self {
            components,
            label: format!("poly{powers:?}"),
        })
    }

    /// Trigonometric basis (sin kt, cos kt) for each frequency k, in order.
    pub fn trig(frequencies: &[u32]) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidBasis("frequency list is empty".into()));
        }
        let mut seen = frequencies.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != frequencies.len() {
            return Err(Error::InvalidBasis(format!(
                "duplicate frequencies in {frequencies:?}"
            )));
        }
        if frequencies.iter().any(|&k| k == 0) {
            return Err(Error::InvalidBasis("frequencies must be positive".into()));
        }
        let mut components = Vec::with_capacity(2 * frequencies.len());
        for &k in frequencies {
            let kf = crate::scalar::real_usize::<T>(k as usize);
            components.push(Component {
                value: Arc::new(move |t: T| (kf * t).sin()) as ScalarFn<T>,
                d1: Arc::new(move |t: T| kf * (kf * t).cos()),
                d2: Some(Arc::new(move |t: T| -kf * kf * (kf * t).sin())),
            });
            components.push(Component {
                value: Arc::new(move |t: T| (kf * t).cos()) as ScalarFn<T>,
                d1: Arc::new(move |t: T| -kf * (kf * t).sin()),
                d2: Some(Arc::new(move |t: T| -kf * kf * (kf * t).cos())),
            });
        }
        Ok(Self {
            components,
            label: format!("trig{frequencies:?}"),
        })
    }

    /// Adds a constant offset to every component; derivatives are unchanged.
    pub fn affine_shift(base: Self, offset: T) -> Self {
        let components = base
            .components
            .into_iter()
            .map(|c| {
                let value = c.value;
                Component {
                    value: Arc::new(move |t: T| value(t) + offset) as ScalarFn<T>,
                    d1: c.d1,
                    d2: c.d2,
                }
            })
            .collect();
        Self {
            components,
            label: format!("{}+{:?}", base.label, offset.to_f64()),
        }
    }

    /// Basis from paired (value, derivative) callables.
    pub fn custom(label: &str, parts: Vec<(ScalarFn<T>, ScalarFn<T>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidBasis("component list is empty".into()));
        }
        Ok(Self {
            components: parts
                .into_iter()
                .map(|(value, d1)| Component {
                    value,
                    d1,
                    d2: None,
                })
                .collect(),
            label: label.to_string(),
        })
    }

    /// Basis from (value, derivative, second derivative) callables.
    pub fn custom_with_second(
        label: &str,
        parts: Vec<(ScalarFn<T>, ScalarFn<T>, ScalarFn<T>)>,
    ) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidBasis("component list is empty".into()));
        }
        Ok(Self {
            components: parts
                .into_iter()
                .map(|(value, d1, d2)| Component {
                    value,
                    d1,
                    d2: Some(d2),
                })
                .collect(),
            label: label.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// f(t).
    pub fn eval(&self, t: T) -> DVector<T> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| (c.value)(t)))
    }

    /// f'(t).
    pub fn deriv(&self, t: T) -> DVector<T> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| (c.d1)(t)))
    }

    pub fn eval_component(&self, k: usize, t: T) -> T {
        (self.components[k].value)(t)
    }

    pub fn deriv_component(&self, k: usize, t: T) -> T {
        (self.components[k].d1)(t)
    }

    pub fn has_second_derivs(&self) -> bool {
        self.components.iter().all(|c| c.d2.is_some())
    }

    /// Analytic f''(t), if every component carries one.
    pub fn second_deriv(&self, t: T) -> Option<DVector<T>> {
        if !self.has_second_derivs() {
            return None;
        }
        Some(DVector::from_iterator(
            self.dim(),
            self.components.iter().map(|c| (c.d2.as_ref().unwrap())(t)),
        ))
    }

    /// f''(t), falling back to a central finite difference of f' with step `h`.
    pub fn second_deriv_or_fd(&self, t: T, h: T) -> DVector<T> {
        match self.second_deriv(t) {
            Some(v) => v,
            None => (self.deriv(t + h) - self.deriv(t - h)) / (real::<T>(2.0) * h),
        }
    }

    /// Returns a new basis keeping only the listed component indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidBasis("component selection is empty".into()));
        }
        Ok(Self {
            components: indices.iter().map(|&i| self.components[i].clone()).collect(),
            label: format!("{}[{:?}]", self.label, indices),
        })
    }

    /// Rank of M = int f' f'^T dt plus the intercept diagnostic: a rank
    /// deficit of one signals a constant direction in the span.
    pub fn gram_rank(&self, interval: &Interval<T>) -> Result<GramRank> {
        let m = self.derivative_gram(interval)?;
        let rank = linalg::psd_rank(&m, linalg::rank_tol());
        Ok(GramRank {
            rank,
            has_intercept: rank + 1 == self.dim(),
        })
    }

    /// M = int_a^b f'(t) f'(t)^T dt by quadrature.
    pub fn derivative_gram(&self, interval: &Interval<T>) -> Result<nalgebra::DMatrix<T>> {
        quad::integrate_outer(
            |t| self.deriv(t),
            self.dim(),
            interval.a(),
            interval.b(),
            quad::default_tol(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn five_point_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn polynomial_values_and_derivatives() {
        let b = RegressionBasis::<f64>::polynomial(&[2]).unwrap();
        assert_abs_diff_eq!(b.eval(1.5)[0], 2.25);
        assert_abs_diff_eq!(b.deriv(1.5)[0], 3.0);
        let c = RegressionBasis::<f64>::polynomial(&[0]).unwrap();
        assert_abs_diff_eq!(c.eval(7.0)[0], 1.0);
        assert_abs_diff_eq!(c.deriv(7.0)[0], 0.0);
    }

    #[test]
    fn duplicate_powers_rejected() {
        assert!(matches!(
            RegressionBasis::<f64>::polynomial(&[1, 2, 1]),
            Err(Error::InvalidBasis(_))
        ));
    }

    #[test]
    fn trig_layout_and_chain_rule() {
        let b = RegressionBasis::<f64>::trig(&[1, 2]).unwrap();
        assert_eq!(b.dim(), 4);
        let t = 0.35f64;
        assert_abs_diff_eq!(b.eval(t)[0], t.sin());
        assert_abs_diff_eq!(b.eval(t)[1], t.cos());
        assert_abs_diff_eq!(b.eval(t)[2], (2.0 * t).sin());
        assert_abs_diff_eq!(b.eval(t)[3], (2.0 * t).cos());
        // derivative of sin 2t at t = 0 is 2
        assert_abs_diff_eq!(b.deriv(0.0)[2], 2.0);
        let single = RegressionBasis::<f64>::trig(&[1]).unwrap();
        assert_eq!(single.dim(), 2);
    }

    #[test]
    fn empty_trig_rejected() {
        assert!(matches!(
            RegressionBasis::<f64>::trig(&[]),
            Err(Error::InvalidBasis(_))
        ));
    }

    #[test]
    fn derivatives_match_finite_differences_at_random_points() {
        let bases = vec![
            RegressionBasis::<f64>::polynomial(&[1, 2, 3]).unwrap(),
            RegressionBasis::<f64>::polynomial(&[0, 4]).unwrap(),
            RegressionBasis::<f64>::trig(&[1, 2]).unwrap(),
            RegressionBasis::affine_shift(RegressionBasis::<f64>::polynomial(&[2]).unwrap(), -0.5),
        ];
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for basis in &bases {
            for _ in 0..100 {
                let t: f64 = 1.0 + rng.random::<f64>();
                for k in 0..basis.dim() {
                    let numeric = five_point_diff(|x| basis.eval_component(k, x), t, 1e-3);
                    let analytic = basis.deriv_component(k, t);
                    let scale = analytic.abs().max(1.0);
                    assert!(
                        (numeric - analytic).abs() / scale < 1e-6,
                        "component {k} of {} at t={t}: fd {numeric} vs analytic {analytic}",
                        basis.label()
                    );
                }
            }
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let b = RegressionBasis::<f64>::trig(&[2]).unwrap();
        let t = 1.3;
        let d2 = b.second_deriv(t).unwrap();
        let fd = five_point_diff(|x| b.deriv_component(0, x), t, 1e-3);
        assert_abs_diff_eq!(d2[0], fd, epsilon = 1e-7);
    }

    #[test]
    fn gram_rank_examples() {
        let iv12 = Interval::new(1.0, 2.0).unwrap();
        let iv01 = Interval::new(0.0, 1.0).unwrap();

        let cubic = RegressionBasis::<f64>::polynomial(&[1, 2, 3]).unwrap();
        let g = cubic.gram_rank(&iv12).unwrap();
        assert_eq!(g, GramRank { rank: 3, has_intercept: false });

        let with_const = RegressionBasis::<f64>::polynomial(&[0, 1]).unwrap();
        let g = with_const.gram_rank(&iv01).unwrap();
        assert_eq!(g, GramRank { rank: 1, has_intercept: true });

        let quad_only = RegressionBasis::<f64>::polynomial(&[2]).unwrap();
        let g = quad_only.gram_rank(&iv12).unwrap();
        assert_eq!(g, GramRank { rank: 1, has_intercept: false });
    }

    #[test]
    fn gram_rank_with_constant_direction_is_dim_minus_one() {
        // constant in span for m = 1..4
        let iv = Interval::new(0.5, 2.0).unwrap();
        for m in 1..=4u32 {
            let powers: Vec<u32> = (0..m).collect();
            let b = RegressionBasis::<f64>::polynomial(&powers).unwrap();
            let g = b.gram_rank(&iv).unwrap();
            assert_eq!(g.rank, (m - 1) as usize, "m = {m}");
            assert!(g.has_intercept);
        }
    }

    #[test]
    fn gram_rank_invariant_under_reordering() {
        let iv = Interval::new(1.0, 2.0).unwrap();
        let b1 = RegressionBasis::<f64>::polynomial(&[1, 2, 3]).unwrap();
        let b2 = RegressionBasis::<f64>::polynomial(&[3, 1, 2]).unwrap();
        assert_eq!(b1.gram_rank(&iv).unwrap(), b2.gram_rank(&iv).unwrap());
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
        let iv = Interval::new(0.0, 1.0).unwrap();
        assert!(iv.require_positive_start().is_err());
    }
}
