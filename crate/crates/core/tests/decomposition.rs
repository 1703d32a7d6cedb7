//! Empirical check of the variance decomposition
//! E[(th_n - th)(th_n - th)^T] = E[(th_n - th_blue)(th_n - th_blue)^T] + C^{-1},
//! with the continuous-time estimator stood in for by the optimally weighted
//! estimator on a dense uniform grid.

use blue_design::basis::{Interval, RegressionBasis};
use blue_design::continuous;
use blue_design::design::Design;
use blue_design::discrete::LinearEstimator;
use blue_design::kernel::TriangularKernel;
use blue_design::montecarlo::{sample_observations, summarize, SimulationPlan};
use nalgebra::{DMatrix, DVector};

/// Number of batches used for the band.
const BATCHES: usize = 20;

#[test]
fn empirical_variance_decomposition_matches_continuous_bound() {
    let interval = Interval::new(1.0, 2.0).unwrap();
    let basis = RegressionBasis::polynomial(&[2]).unwrap();
    let theta = nalgebra::dvector![1.5];
    let replicates = 40_000;

    // dense reference grid containing the coarse design as every 500th point
    let fine_n = 2001;
    let stride = 500;
    let fine = Design::equidistant(&interval, fine_n).unwrap();
    let coarse_indices: Vec<usize> = (0..5).map(|i| i * stride).collect();
    let coarse = Design::new(
        coarse_indices
            .iter()
            .map(|&i| fine.points()[i])
            .collect::<Vec<_>>(),
    )
    .unwrap();

    let fine_est = LinearEstimator::optimal_weights_multi(&basis, &fine, &interval).unwrap();
    let coarse_est = LinearEstimator::optimal_weights_multi(&basis, &coarse, &interval).unwrap();
    let c_inv = continuous::c_matrix(&basis, &interval).unwrap().c_inv;

    let plan = SimulationPlan {
        basis: basis.clone(),
        kernel: TriangularKernel::brownian(),
        design: fine.clone(),
        interval,
        theta: theta.clone(),
        replicates,
        seed: 99,
    };
    let fine_obs = sample_observations(&plan).unwrap();
    let mut coarse_obs = DMatrix::zeros(5, replicates);
    for (row, &i) in coarse_indices.iter().enumerate() {
        for c in 0..replicates {
            coarse_obs[(row, c)] = fine_obs[(i, c)];
        }
    }

    let fine_estimates = fine_est.apply(&fine_obs).unwrap();
    let coarse_estimates = coarse_est.apply(&coarse_obs).unwrap();

    // per-replicate difference of the two outer products; its mean is C^{-1}
    let m = basis.dim();
    let mut batch_means: Vec<DMatrix<f64>> = Vec::with_capacity(BATCHES);
    let per_batch = replicates / BATCHES;
    for b in 0..BATCHES {
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for c in b * per_batch..(b + 1) * per_batch {
            let err: DVector<f64> = coarse_estimates.column(c) - &theta;
            let gap: DVector<f64> = coarse_estimates.column(c) - fine_estimates.column(c);
            acc += &err * err.transpose() - &gap * gap.transpose();
        }
        batch_means.push(acc / per_batch as f64);
    }
    let mean = batch_means
        .iter()
        .fold(DMatrix::<f64>::zeros(m, m), |a, b| a + b)
        / BATCHES as f64;
    for i in 0..m {
        for j in 0..m {
            let mu = mean[(i, j)];
            let var = batch_means
                .iter()
                .map(|b| (b[(i, j)] - mu).powi(2))
                .sum::<f64>()
                / (BATCHES - 1) as f64;
            let se = (var / BATCHES as f64).sqrt();
            let z = (mu - c_inv[(i, j)]).abs() / se.max(1e-300);
            assert!(
                z < 3.0,
                "entry ({i},{j}): empirical {mu} vs bound {} (z = {z:.2})",
                c_inv[(i, j)]
            );
        }
    }

    // sanity on the summary path: the coarse estimator is unbiased
    let report = summarize(&coarse_estimates, &theta);
    assert!(report.bias[0].abs() < 4.0 * report.bias_se[0]);
}
