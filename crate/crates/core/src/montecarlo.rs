//! Simulation harness: Gaussian trajectories at the design points and
//! empirical verification of bias, covariance and the variance decomposition.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::basis::{Interval, RegressionBasis};
use crate::design::Design;
use crate::discrete::LinearEstimator;
use crate::error::{Error, Result};
use crate::kernel::{KernelKind, TriangularKernel};
use crate::scalar::{real, real_usize, Scalar};
use crate::wlse::WlseEstimator;

/// What to simulate: model, kernel, design, true parameter, replicate count
/// and the master seed. Replicates use separate, order-independent streams of
/// one counter-based generator.
#[derive(Clone, Debug)]
pub struct SimulationPlan<T> {
    pub basis: RegressionBasis<T>,
    pub kernel: TriangularKernel<T>,
    pub design: Design<T>,
    pub interval: Interval<T>,
    pub theta: DVector<T>,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> SimulationPlan<T> {
    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        if self.theta.len() != self.basis.dim() {
            return Err(Error::InvalidInput(format!(
                "theta has {} entries for a {}-dimensional basis",
                self.theta.len(),
                self.basis.dim()
            )));
        }
        Ok(())
    }
}

fn standard_normal<T: Scalar>(rng: &mut ChaCha12Rng) -> T {
    real::<T>(rng.sample::<f64, _>(StandardNormal))
}

/// Draws the observation matrix (design size x replicates). Brownian errors
/// use the exact independent-increment construction; other kernels go
/// through the Cholesky factor of the covariance matrix.
pub fn sample_observations<T: Scalar>(plan: &SimulationPlan<T>) -> Result<DMatrix<T>> {
    plan.validate()?;
    let pts = plan.design.points();
    let n = pts.len();
    let mean = DVector::<T>::from_iterator(
        n,
        pts.iter().map(|&t| plan.theta.dot(&plan.basis.eval(t))),
    );

    let brownian = matches!(plan.kernel.kind(), KernelKind::Brownian);
    let chol = if brownian {
        None
    } else {
        let sigma = plan.kernel.covariance_matrix(&plan.design)?;
        Some(nalgebra::Cholesky::new(sigma).ok_or_else(|| {
            Error::InvalidDesign(
                "covariance matrix is not positive definite at the design".into(),
            )
        })?)
    };

    let mut out = DMatrix::zeros(n, plan.replicates);
    for r in 0..plan.replicates {
        let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
        rng.set_stream(1 + r as u64);
        let column = if brownian {
            let mut eps = DVector::zeros(n);
            let mut level = pts[0].max(T::zero()).sqrt() * standard_normal::<T>(&mut rng);
            eps[0] = level;
            for i in 1..n {
                level += (pts[i] - pts[i - 1]).sqrt() * standard_normal::<T>(&mut rng);
                eps[i] = level;
            }
            eps
        } else {
            let z = DVector::from_fn(n, |_, _| standard_normal::<T>(&mut rng));
            chol.as_ref().unwrap().l() * z
        };
        for i in 0..n {
            out[(i, r)] = mean[i] + column[i];
        }
    }
    Ok(out)
}

/// Anything that turns a column of observations at the design points into a
/// parameter estimate.
pub trait PointEstimator<T> {
    fn dim(&self) -> usize;
    fn estimate_all(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>>;
}

impl<T: Scalar> PointEstimator<T> for LinearEstimator<T> {
    fn dim(&self) -> usize {
        LinearEstimator::dim(self)
    }

    fn estimate_all(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.apply(observations)
    }
}

impl<T: Scalar> PointEstimator<T> for WlseEstimator<T> {
    fn dim(&self) -> usize {
        WlseEstimator::dim(self)
    }

    fn estimate_all(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>> {
        WlseEstimator::estimate_all(self, observations)
    }
}

/// Estimator defined on the Brownian time scale of a transformed model:
/// observations are scaled by 1/v(t_i) before the inner estimator runs.
pub struct ScaledEstimator<T> {
    pub inner: LinearEstimator<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> PointEstimator<T> for ScaledEstimator<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn estimate_all(&self, observations: &DMatrix<T>) -> Result<DMatrix<T>> {
        if observations.nrows() != self.scale.len() {
            return Err(Error::InvalidInput(format!(
                "observation rows {} != design size {}",
                observations.nrows(),
                self.scale.len()
            )));
        }
        let mut scaled = observations.clone();
        for (i, s) in self.scale.iter().enumerate() {
            for c in 0..scaled.ncols() {
                scaled[(i, c)] *= *s;
            }
        }
        self.inner.apply(&scaled)
    }
}

/// Empirical bias and mean squared error with batch-means standard errors.
#[derive(Clone, Debug)]
pub struct EmpiricalMse<T> {
    pub mean: DVector<T>,
    pub bias: DVector<T>,
    pub bias_se: DVector<T>,
    pub mse: DMatrix<T>,
    pub mse_se: DMatrix<T>,
    pub replicates: usize,
    pub batches: usize,
}

/// Number of batches used for the standard errors.
pub const BATCHES: usize = 20;

/// Runs the plan through the estimator and summarizes bias and MSE around
/// the true parameter with batch-means standard errors over 20 batches.
pub fn empirical_mse<T: Scalar, E: PointEstimator<T> + ?Sized>(
    estimator: &E,
    plan: &SimulationPlan<T>,
) -> Result<EmpiricalMse<T>> {
    let observations = sample_observations(plan)?;
    let estimates = estimator.estimate_all(&observations)?;
    Ok(summarize(&estimates, &plan.theta))
}

/// Summary statistics for an m x r matrix of estimates.
pub fn summarize<T: Scalar>(estimates: &DMatrix<T>, theta: &DVector<T>) -> EmpiricalMse<T> {
    let m = estimates.nrows();
    let r = estimates.ncols();
    let batches = BATCHES.min(r);
    let r_t = real_usize::<T>(r);

    let mut mean = DVector::<T>::zeros(m);
    for c in 0..r {
        mean += estimates.column(c);
    }
    mean /= r_t;
    let bias = &mean - theta;

    let mut mse = DMatrix::<T>::zeros(m, m);
    for c in 0..r {
        let d = estimates.column(c) - theta;
        mse += &d * d.transpose();
    }
    mse /= r_t;

    // batch means for the standard errors
    let mut bias_batches: Vec<DVector<T>> = Vec::with_capacity(batches);
    let mut mse_batches: Vec<DMatrix<T>> = Vec::with_capacity(batches);
    let base = r / batches;
    let mut start = 0;
    for k in 0..batches {
        let len = if k < r % batches { base + 1 } else { base };
        let len_t = real_usize::<T>(len);
        let mut bm = DVector::<T>::zeros(m);
        let mut mm = DMatrix::<T>::zeros(m, m);
        for c in start..start + len {
            let col = estimates.column(c);
            bm += col;
            let d = col - theta;
            mm += &d * d.transpose();
        }
        bias_batches.push(bm / len_t - theta);
        mse_batches.push(mm / len_t);
        start += len;
    }

    let b_t = real_usize::<T>(batches);
    let denom = if batches > 1 {
        real_usize::<T>(batches - 1)
    } else {
        T::one()
    };
    let mut bias_se = DVector::<T>::zeros(m);
    for j in 0..m {
        let mu = bias_batches.iter().fold(T::zero(), |acc, v| acc + v[j]) / b_t;
        let var = bias_batches
            .iter()
            .fold(T::zero(), |acc, v| acc + (v[j] - mu) * (v[j] - mu))
            / denom;
        bias_se[j] = (var / b_t).sqrt();
    }
    let mut mse_se = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mu = mse_batches.iter().fold(T::zero(), |acc, v| acc + v[(i, j)]) / b_t;
            let var = mse_batches
                .iter()
                .fold(T::zero(), |acc, v| acc + (v[(i, j)] - mu) * (v[(i, j)] - mu))
                / denom;
            mse_se[(i, j)] = (var / b_t).sqrt();
        }
    }

    EmpiricalMse {
        mean,
        bias,
        bias_se,
        mse,
        mse_se,
        replicates: r,
        batches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn plan(replicates: usize, seed: u64) -> SimulationPlan<f64> {
        let interval = Interval::new(1.0, 2.0).unwrap();
        SimulationPlan {
            basis: RegressionBasis::polynomial(&[1]).unwrap(),
            kernel: TriangularKernel::brownian(),
            design: Design::equidistant(&interval, 5).unwrap(),
            interval,
            theta: dvector![2.0],
            replicates,
            seed,
        }
    }

    #[test]
    fn same_seed_reproduces_exactly() {
        let p = plan(64, 9);
        let a = sample_observations(&p).unwrap();
        let b = sample_observations(&p).unwrap();
        assert_eq!(a, b);
        let p2 = plan(64, 10);
        assert_ne!(sample_observations(&p2).unwrap(), a);
    }

    #[test]
    fn mean_at_endpoint_matches_model() {
        // f(t) = t, theta = 2: E[Y_2] = 4, Var[Y_2] = 2
        let p = plan(100_000, 3);
        let obs = sample_observations(&p).unwrap();
        let n = p.design.n();
        let mut mean = 0.0;
        for c in 0..p.replicates {
            mean += obs[(n - 1, c)];
        }
        mean /= p.replicates as f64;
        let band = 4.0 * (2.0f64 / p.replicates as f64).sqrt();
        assert!((mean - 4.0).abs() < band, "mean {mean} outside {band}");
    }

    #[test]
    fn noise_covariance_matches_kernel() {
        // theta = 0: sample covariance at (1, 2) approaches [[1,1],[1,2]]
        let interval = Interval::new(1.0, 2.0).unwrap();
        let p = SimulationPlan {
            basis: RegressionBasis::polynomial(&[1]).unwrap(),
            kernel: TriangularKernel::brownian(),
            design: Design::new(vec![1.0, 2.0]).unwrap(),
            interval,
            theta: dvector![0.0],
            replicates: 100_000,
            seed: 5,
        };
        let obs = sample_observations(&p).unwrap();
        let r = p.replicates as f64;
        let mut cov = [[0.0f64; 2]; 2];
        for c in 0..p.replicates {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += obs[(i, c)] * obs[(j, c)];
                }
            }
        }
        let expected = [[1.0f64, 1.0], [1.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                let v = cov[i][j] / r;
                // 3 standard errors of a second-moment estimate
                let se = 3.0 * (2.0f64).sqrt() * expected[i][j].max(1.0) / r.sqrt() * 1.5;
                assert!(
                    (v - expected[i][j]).abs() < se,
                    "cov[{i}][{j}] = {v}, expected {}",
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn cholesky_path_matches_exponential_kernel() {
        let interval = Interval::new(1.0, 2.0).unwrap();
        let p = SimulationPlan {
            basis: RegressionBasis::polynomial(&[0]).unwrap(),
            kernel: TriangularKernel::exponential(1.0).unwrap(),
            design: Design::new(vec![1.0, 2.0]).unwrap(),
            interval,
            theta: dvector![0.0],
            replicates: 80_000,
            seed: 6,
        };
        let obs = sample_observations(&p).unwrap();
        let r = p.replicates as f64;
        let mut c01 = 0.0;
        for c in 0..p.replicates {
            c01 += obs[(0, c)] * obs[(1, c)];
        }
        c01 /= r;
        let expected = (-1.0f64).exp();
        assert!((c01 - expected).abs() < 4.0 / r.sqrt() * 2.0);
    }

    #[test]
    fn unbiased_estimator_has_statistically_zero_bias() {
        let p = plan(20_000, 11);
        let est = LinearEstimator::optimal_weights_1d(&p.basis, &p.design, &p.interval).unwrap();
        let report = empirical_mse(&est, &p).unwrap();
        assert!(report.bias[0].abs() < 4.0 * report.bias_se[0]);
        // f(t) = t: the estimator is Y_b / b with variance 1/2
        assert!((report.mse[(0, 0)] - 0.5).abs() < 3.0 * report.mse_se[(0, 0)]);
    }

    #[test]
    fn scaled_weights_produce_visible_bias() {
        let p = plan(20_000, 12);
        let est = LinearEstimator::optimal_weights_1d(&p.basis, &p.design, &p.interval).unwrap();
        let scaled: Vec<_> = est.weights().iter().map(|w| w * 1.1).collect();
        let biased =
            LinearEstimator::with_weights(&p.basis, &p.design, &p.interval, scaled).unwrap();
        let report = empirical_mse(&biased, &p).unwrap();
        assert!(
            report.bias[0].abs() > 4.0 * report.bias_se[0],
            "bias {} se {}",
            report.bias[0],
            report.bias_se[0]
        );
    }

    #[test]
    fn batch_means_cover_theoretical_variance_for_wlse() {
        let interval = Interval::new(1.0, 2.0).unwrap();
        let basis = RegressionBasis::polynomial(&[2]).unwrap();
        let kernel = TriangularKernel::exponential(1.0).unwrap();
        let design = Design::equidistant(&interval, 5).unwrap();
        let p = SimulationPlan {
            basis: basis.clone(),
            kernel: kernel.clone(),
            design: design.clone(),
            interval,
            theta: dvector![1.5],
            replicates: 30_000,
            seed: 13,
        };
        let est = WlseEstimator::new(&basis, &kernel, &design).unwrap();
        let report = empirical_mse(&est, &p).unwrap();
        let v: f64 = est.variance[(0, 0)];
        assert!(
            (report.mse[(0, 0)] - v).abs() < 3.0 * report.mse_se[(0, 0)],
            "empirical {} theory {} se {}",
            report.mse[(0, 0)],
            v,
            report.mse_se[(0, 0)]
        );
    }
}
