//! The estimation-facing subcommands: blue, weights, design, efficiency and
//! simulate.

use std::path::Path;

use blue_design::basis::{Interval, RegressionBasis};
use blue_design::continuous;
use blue_design::design::Design;
use blue_design::kernel::{KernelKind, TriangularKernel};
use blue_design::montecarlo::{empirical_mse, EmpiricalMse, ScaledEstimator, SimulationPlan};
use blue_design::search::{self, star_estimator, PsoConfig};
use blue_design::wlse::WlseEstimator;
use blue_design::nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::{ObjectiveSpec, OutputFormat, RunConfig, SimulatePlanConfig};
use crate::output::{self, matrix_rows, vector_entries};
use crate::CliError;

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))
}

/// Continuous-time estimator summary: C, its inverse, and the degenerate-case
/// annotations when the left endpoint carries an error-free observation.
pub fn cmd_blue(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let basis = config.model.basis.build()?;
    let interval = config.model.interval()?;
    let kernel = config.kernel.build()?;
    let format = config.output.unwrap_or_default();

    let degenerate = kernel.u(interval.a()) == 0.0;
    let report = if !degenerate {
        let blue = if matches!(kernel.kind(), KernelKind::Brownian) {
            continuous::c_matrix(&basis, &interval).map_err(CliError::numeric)?
        } else {
            continuous::blue_general_kernel(&basis, &kernel, &interval)
                .map_err(CliError::numeric)?
        };
        json!({
            "degenerate_kind": "none",
            "C": matrix_rows(&blue.c),
            "C_inv": matrix_rows(&blue.c_inv),
            "trace_variance": blue.c_inv.trace(),
        })
    } else {
        // error-free observation at the left endpoint: dispatch on the
        // intercept diagnostic and the value of f at the origin
        let (d_basis, d_interval, transformed) = if matches!(kernel.kind(), KernelKind::Brownian)
        {
            (basis.clone(), interval, false)
        } else {
            let tm = kernel
                .doob_transform(&basis, &interval)
                .map_err(CliError::numeric)?;
            (tm.basis.clone(), tm.interval, true)
        };
        let rank = d_basis.gram_rank(&d_interval).map_err(CliError::numeric)?;
        if rank.has_intercept {
            let blocks = continuous::degenerate_intercept(&d_basis, &d_interval)
                .map_err(CliError::numeric)?;
            json!({
                "degenerate_kind": "intercept",
                "transformed_model": transformed,
                "constant_index": blocks.constant_index,
                "var_intercept": blocks.var_intercept,
                "cov_row": vector_entries(&blocks.cov_row),
                "var_rest": matrix_rows(&blocks.var_rest),
                "full_covariance": matrix_rows(&blocks.full_covariance()),
            })
        } else {
            let f0 = d_basis.eval(0.0);
            if f0.amax() <= 1e-12 {
                let d = continuous::degenerate_f0_zero(&d_basis, &d_interval)
                    .map_err(CliError::numeric)?;
                json!({
                    "degenerate_kind": "f0_zero",
                    "transformed_model": transformed,
                    "C_inv": matrix_rows(&d.variance),
                    "trace_variance": d.variance.trace(),
                })
            } else {
                let d = continuous::degenerate_no_intercept(&d_basis, &d_interval)
                    .map_err(CliError::numeric)?;
                json!({
                    "degenerate_kind": "no_intercept_f0_nonzero",
                    "transformed_model": transformed,
                    "C_inv": matrix_rows(&d.variance),
                    "trace_variance": d.variance.trace(),
                    "y0_coefficient": d.y0_coefficient.as_ref().map(vector_entries),
                })
            }
        }
    };

    match format {
        OutputFormat::Json | OutputFormat::Csv => {
            output::emit(out, &to_json_pretty(&report)?)
        }
        OutputFormat::Table => {
            let matrix_from = |key: &str| -> Option<Vec<Vec<f64>>> {
                report.get(key).and_then(|v| {
                    serde_json::from_value::<Vec<Vec<f64>>>(v.clone()).ok()
                })
            };
            let mut text = format!(
                "degenerate_kind: {}\n",
                report["degenerate_kind"].as_str().unwrap_or("?")
            );
            for key in ["C", "C_inv", "full_covariance"] {
                if let Some(rows) = matrix_from(key) {
                    text.push_str(&format!("{key}:\n{}\n", output::format_matrix(&rows)));
                }
            }
            if let Some(tv) = report.get("trace_variance").and_then(|v| v.as_f64()) {
                text.push_str(&format!("trace variance: {tv:.10}\n"));
            }
            output::emit(out, text.trim_end())
        }
    }
}

#[derive(Serialize)]
struct WeightsReport {
    design: serde_json::Value,
    weights: Vec<Vec<f64>>,
    #[serde(rename = "C_inv")]
    c_inv: Vec<Vec<f64>>,
    observation_coefficients: Vec<Vec<f64>>,
    unbiasedness_residual: f64,
    used_pseudo_inverse: bool,
    efficiency: f64,
}

fn explicit_design_json(design: &Design<f64>) -> serde_json::Value {
    json!({"type": "explicit", "points": design.to_f64_vec()})
}

fn weights_report(
    basis: &RegressionBasis<f64>,
    kernel: &TriangularKernel<f64>,
    design: &Design<f64>,
    interval: &Interval<f64>,
) -> Result<WeightsReport, CliError> {
    let (est, _) = star_estimator(basis, kernel, design, interval).map_err(CliError::numeric)?;
    let check_basis = if matches!(kernel.kind(), KernelKind::Brownian) {
        basis.clone()
    } else {
        kernel
            .doob_transform(basis, interval)
            .map_err(CliError::numeric)?
            .basis
    };
    Ok(WeightsReport {
        design: explicit_design_json(design),
        weights: est.weights().iter().map(vector_entries).collect(),
        c_inv: matrix_rows(est.c_inv()),
        observation_coefficients: est
            .observation_coefficients()
            .iter()
            .map(vector_entries)
            .collect(),
        unbiasedness_residual: est.unbiasedness_residual(&check_basis),
        used_pseudo_inverse: est.used_pseudo_inverse(),
        efficiency: est.efficiency(),
    })
}

fn design_point_rows(design: &Design<f64>, coeffs: &[Vec<f64>]) -> Vec<Vec<String>> {
    design
        .points()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut row = vec![format!("{}", i + 1), format!("{t:.6}")];
            row.extend(coeffs[i].iter().map(|w| format!("{w:.8}")));
            row
        })
        .collect()
}

fn point_table_headers(m: usize) -> Vec<String> {
    let mut headers = vec!["index".to_string(), "t".to_string()];
    headers.extend((1..=m).map(|k| format!("w{k}")));
    headers
}

/// Optimal increment weights at a fixed design.
pub fn cmd_weights(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let basis = config.model.basis.build()?;
    let interval = config.model.interval()?;
    let kernel = config.kernel.build()?;
    let design = config.fixed_design(&interval)?;
    let report = weights_report(&basis, &kernel, &design, &interval)?;
    match config.output.unwrap_or_default() {
        OutputFormat::Json => output::emit(out, &to_json_pretty(&report)?),
        OutputFormat::Csv => {
            let headers = point_table_headers(basis.dim());
            let headers_ref: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
            let rows = design_point_rows(&design, &report.observation_coefficients);
            output::emit(out, &output::csv(&headers_ref, &rows))
        }
        OutputFormat::Table => {
            let headers = point_table_headers(basis.dim());
            let headers_ref: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
            let rows = design_point_rows(&design, &report.observation_coefficients);
            let mut text = output::text_table(&headers_ref, &rows);
            text.push_str(&format!(
                "efficiency: {:.6}  unbiasedness residual: {:.2e}\n",
                report.efficiency, report.unbiasedness_residual
            ));
            output::emit(out, text.trim_end())
        }
    }
}

#[derive(Serialize)]
struct DesignReport {
    objective: ObjectiveSpec,
    design: serde_json::Value,
    objective_value: f64,
    seed: u64,
    converged: bool,
    failures: usize,
    efficiency_wlse: f64,
    efficiency_star: f64,
    weights: Vec<Vec<f64>>,
    trace: Vec<f64>,
}

/// Design optimization by particle swarm search.
pub fn cmd_design(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let basis = config.model.basis.build()?;
    let interval = config.model.interval()?;
    let kernel = config.kernel.build()?;
    let objective = config.objective.unwrap_or(ObjectiveSpec::MseStar);
    let pso: PsoConfig = config.pso.unwrap_or_default().build();

    let (design, result) = match &config.design {
        crate::config::DesignSpec::Optimize => {
            let r = search::optimize_design(
                objective.to_core(),
                &basis,
                &kernel,
                config.n(),
                &interval,
                &pso,
            )
            .map_err(CliError::numeric)?;
            (r.design.clone(), Some(r))
        }
        _ => (config.fixed_design(&interval)?, None),
    };

    let eff_wlse = search::wlse_efficiency(&basis, &kernel, &design, &interval)
        .map_err(CliError::numeric)?;
    let eff_star = search::star_efficiency(&basis, &kernel, &design, &interval)
        .map_err(CliError::numeric)?;
    let weights = weights_report(&basis, &kernel, &design, &interval)?;

    let report = DesignReport {
        objective,
        design: explicit_design_json(&design),
        objective_value: result.as_ref().map(|r| r.objective_value).unwrap_or_else(|| {
            search::evaluate_objective(objective.to_core(), &basis, &kernel, &interval, &design)
                .unwrap_or(f64::NAN)
        }),
        seed: pso.seed,
        converged: result.as_ref().map(|r| r.converged).unwrap_or(true),
        failures: result.as_ref().map(|r| r.failures).unwrap_or(0),
        efficiency_wlse: eff_wlse,
        efficiency_star: eff_star,
        weights: weights.weights.clone(),
        trace: result.map(|r| r.trace).unwrap_or_default(),
    };

    match config.output.unwrap_or_default() {
        OutputFormat::Json => output::emit(out, &to_json_pretty(&report)?),
        OutputFormat::Csv => {
            let headers = point_table_headers(basis.dim());
            let headers_ref: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
            let rows = design_point_rows(&design, &weights.observation_coefficients);
            output::emit(out, &output::csv(&headers_ref, &rows))
        }
        OutputFormat::Table => {
            let pts: Vec<String> = design.points().iter().map(|t| format!("{t:.4}")).collect();
            let text = format!(
                "design: [{}]\nobjective ({:?}): {:.6e}\nefficiency wlse: {:.4}  star: {:.4}\nseed: {}",
                pts.join(", "),
                report.objective,
                report.objective_value,
                report.efficiency_wlse,
                report.efficiency_star,
                report.seed
            );
            output::emit(out, &text)
        }
    }
}

/// Efficiencies of both estimators at a fixed design.
pub fn cmd_efficiency(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let basis = config.model.basis.build()?;
    let interval = config.model.interval()?;
    let kernel = config.kernel.build()?;
    let design = config.fixed_design(&interval)?;
    let reference = search::reference_variance(&basis, &kernel, &interval)
        .map_err(CliError::numeric)?;
    let eff_wlse = search::wlse_efficiency(&basis, &kernel, &design, &interval)
        .map_err(CliError::numeric)?;
    let eff_star = search::star_efficiency(&basis, &kernel, &design, &interval)
        .map_err(CliError::numeric)?;
    let report = json!({
        "design": explicit_design_json(&design),
        "efficiency_wlse": eff_wlse,
        "efficiency_star": eff_star,
        "reference_trace_variance": reference.trace(),
    });
    match config.output.unwrap_or_default() {
        OutputFormat::Json | OutputFormat::Csv => output::emit(out, &to_json_pretty(&report)?),
        OutputFormat::Table => output::emit(
            out,
            &format!(
                "efficiency wlse: {:.6}\nefficiency star: {:.6}\nreference trace: {:.6e}",
                eff_wlse,
                eff_star,
                reference.trace()
            ),
        ),
    }
}

#[derive(Serialize)]
struct EstimatorSimReport {
    estimator: String,
    bias: Vec<f64>,
    bias_se: Vec<f64>,
    mse: Vec<Vec<f64>>,
    mse_se: Vec<Vec<f64>>,
    theory: Vec<Vec<f64>>,
    bias_within_4se: bool,
    mse_within_3se: bool,
}

fn band_check(rep: &EmpiricalMse<f64>, theory: &blue_design::nalgebra::DMatrix<f64>) -> (bool, bool) {
    let m = theory.nrows();
    let mut bias_ok = true;
    for j in 0..m {
        bias_ok &= rep.bias[j].abs() <= 4.0 * rep.bias_se[j].max(1e-300);
    }
    let mut mse_ok = true;
    for i in 0..m {
        for j in 0..m {
            mse_ok &=
                (rep.mse[(i, j)] - theory[(i, j)]).abs() <= 3.0 * rep.mse_se[(i, j)].max(1e-300);
        }
    }
    (bias_ok, mse_ok)
}

fn sim_report(
    name: &str,
    rep: &EmpiricalMse<f64>,
    theory: &blue_design::nalgebra::DMatrix<f64>,
) -> EstimatorSimReport {
    let (bias_ok, mse_ok) = band_check(rep, theory);
    EstimatorSimReport {
        estimator: name.into(),
        bias: vector_entries(&rep.bias),
        bias_se: vector_entries(&rep.bias_se),
        mse: matrix_rows(&rep.mse),
        mse_se: matrix_rows(&rep.mse_se),
        theory: matrix_rows(theory),
        bias_within_4se: bias_ok,
        mse_within_3se: mse_ok,
    }
}

/// Monte Carlo validation run: samples trajectories, applies both estimators
/// and reports bias and MSE with acceptance bands.
pub fn cmd_simulate(config: &SimulatePlanConfig, out: Option<&Path>) -> Result<(), CliError> {
    let basis = config.model.basis.build()?;
    let interval = config.model.interval()?;
    let kernel = config.kernel.build()?;
    let run = RunConfig {
        model: config.model.clone(),
        kernel: config.kernel.clone(),
        n: config.n,
        design: config.design.clone(),
        objective: None,
        pso: None,
        output: None,
    };
    let design = run.fixed_design(&interval)?;
    if config.theta.len() != basis.dim() {
        return Err(CliError::Config(format!(
            "theta has {} entries for a {}-dimensional basis",
            config.theta.len(),
            basis.dim()
        )));
    }
    let plan = SimulationPlan {
        basis: basis.clone(),
        kernel: kernel.clone(),
        design: design.clone(),
        interval,
        theta: DVector::from_vec(config.theta.clone()),
        replicates: config.replicates,
        seed: config.seed,
    };

    let (inner, scale) =
        star_estimator(&basis, &kernel, &design, &interval).map_err(CliError::numeric)?;
    let star_theory = inner.variance();
    let star = ScaledEstimator { inner, scale };
    let star_rep = empirical_mse(&star, &plan).map_err(CliError::numeric)?;

    let est = WlseEstimator::new(&basis, &kernel, &design).map_err(CliError::numeric)?;
    let wlse_theory = est.variance.clone();
    let wlse_rep = empirical_mse(&est, &plan).map_err(CliError::numeric)?;

    let reports = vec![
        sim_report("star", &star_rep, &star_theory),
        sim_report("wlse", &wlse_rep, &wlse_theory),
    ];
    let all_pass = reports
        .iter()
        .all(|r| r.bias_within_4se && r.mse_within_3se);
    let report = json!({
        "replicates": config.replicates,
        "seed": config.seed,
        "design": explicit_design_json(&design),
        "estimators": reports,
        "pass": all_pass,
    });
    output::emit(out, &to_json_pretty(&report)?)?;
    if !all_pass {
        return Err(CliError::Numeric(
            "simulation bands violated; see report".into(),
        ));
    }
    Ok(())
}
