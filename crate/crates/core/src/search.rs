//! Design optimization: particle swarm search over the interior design
//! points against either the discrete-approximation MSE trace or the
//! weighted-least-squares variance trace, followed by a deterministic
//! coordinate-descent polish.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::basis::{Interval, RegressionBasis};
use crate::continuous;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{KernelKind, TransformedModel, TriangularKernel};
use crate::linalg;
use crate::scalar::{real, Scalar};
use crate::wlse;

/// Which criterion the interior points are optimized against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignObjective {
    /// Trace of the mean squared error between the optimally weighted
    /// discrete estimator and the continuous-time one. For non-Brownian
    /// kernels the criterion is evaluated on the time-changed model and the
    /// winning design is mapped back.
    MseStar,
    /// Trace of the weighted-least-squares variance at the design.
    WlseTrace,
}

/// Swarm hyperparameters. The defaults are the standard constriction-style
/// coefficients; every field can be overridden.
#[derive(Clone, Copy, Debug)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            iterations: 300,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 42,
            restarts: 8,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 10 {
            return Err(Error::InvalidInput(format!(
                "swarm size must be at least 10, got {}",
                self.swarm_size
            )));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput(
                "iterations and restarts must be at least 1".into(),
            ));
        }
        if self.inertia <= 0.0 || self.cognitive <= 0.0 || self.social <= 0.0 {
            return Err(Error::InvalidInput(
                "inertia and attraction coefficients must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a search or a polish step.
#[derive(Clone, Debug)]
pub struct SearchResult<T> {
    /// Optimized design in the original time scale, endpoints included.
    pub design: Design<T>,
    pub objective_value: T,
    /// Best objective after each iteration of the winning restart.
    pub trace: Vec<T>,
    pub converged: bool,
    /// Number of objective evaluations that failed and forced a resample.
    pub failures: usize,
}

/// Uniform grid including both endpoints.
pub fn equidistant_design<T: Scalar>(n: usize, interval: &Interval<T>) -> Result<Design<T>> {
    Design::equidistant(interval, n)
}

/// Objective evaluator carrying the design-independent matrices.
struct Evaluator<T> {
    mode: Mode<T>,
    /// Interval the particle coordinates live in.
    search_interval: Interval<T>,
}

enum Mode<T> {
    Star {
        basis: RegressionBasis<T>,
        c_inv: DMatrix<T>,
        m_matrix: DMatrix<T>,
        transform: Option<TransformedModel<T>>,
    },
    Wlse {
        basis: RegressionBasis<T>,
        kernel: TriangularKernel<T>,
    },
}

impl<T: Scalar> Evaluator<T> {
    fn new(
        objective: DesignObjective,
        basis: &RegressionBasis<T>,
        kernel: &TriangularKernel<T>,
        interval: &Interval<T>,
    ) -> Result<Self> {
        match objective {
            DesignObjective::MseStar => {
                let (search_basis, search_interval, transform) =
                    if matches!(kernel.kind(), KernelKind::Brownian) {
                        (basis.clone(), *interval, None)
                    } else {
                        let tm = kernel.doob_transform(basis, interval)?;
                        (tm.basis.clone(), tm.interval, Some(tm))
                    };
                let blue = continuous::c_matrix(&search_basis, &search_interval)?;
                let m_matrix = search_basis.derivative_gram(&search_interval)?;
                Ok(Self {
                    mode: Mode::Star {
                        basis: search_basis,
                        c_inv: blue.c_inv,
                        m_matrix,
                        transform,
                    },
                    search_interval,
                })
            }
            DesignObjective::WlseTrace => {
                kernel.validate(interval)?;
                Ok(Self {
                    mode: Mode::Wlse {
                        basis: basis.clone(),
                        kernel: kernel.clone(),
                    },
                    search_interval: *interval,
                })
            }
        }
    }

    /// Objective at a full design in the search time scale.
    fn evaluate(&self, design: &Design<T>) -> Result<T> {
        match &self.mode {
            Mode::Star {
                basis,
                c_inv,
                m_matrix,
                ..
            } => {
                let m = basis.dim();
                let mut b = DMatrix::zeros(m, m);
                let pts = design.points();
                for i in 1..pts.len() {
                    let df = basis.eval(pts[i]) - basis.eval(pts[i - 1]);
                    let beta = df / (pts[i] - pts[i - 1]).sqrt();
                    b += &beta * beta.transpose();
                }
                let chol = linalg::cholesky(&b, "increment Gram matrix B")?;
                let mb = chol.solve(m_matrix); // B^{-1} M
                let inner = m_matrix * mb - m_matrix;
                Ok((c_inv * inner * c_inv).trace())
            }
            Mode::Wlse { basis, kernel } => {
                Ok(wlse::wlse_variance(basis, kernel, design)?.variance.trace())
            }
        }
    }

    /// Maps a search-scale design to the original time scale.
    fn to_original(&self, design: &Design<T>) -> Result<Design<T>> {
        match &self.mode {
            Mode::Star {
                transform: Some(tm),
                ..
            } => tm.map_design_back(design),
            _ => Ok(design.clone()),
        }
    }

    /// Maps an original-scale design into the search time scale.
    fn from_original(&self, design: &Design<T>) -> Result<Design<T>> {
        match &self.mode {
            Mode::Star {
                transform: Some(tm),
                ..
            } => tm.map_design_forward(design),
            _ => Ok(design.clone()),
        }
    }
}

/// Public one-shot evaluation of a search objective at a given design in the
/// original time scale; used to re-check reported objective values.
pub fn evaluate_objective<T: Scalar>(
    objective: DesignObjective,
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    interval: &Interval<T>,
    design: &Design<T>,
) -> Result<T> {
    let eval = Evaluator::new(objective, basis, kernel, interval)?;
    let d = eval.from_original(design)?;
    eval.evaluate(&d)
}

fn min_gap<T: Scalar>(interval: &Interval<T>) -> T {
    real::<T>(1e-6) * interval.length()
}

/// Sorts the interior coordinates, clamps them into the open interval and
/// enforces the minimum spacing; the endpoints are pinned to a and b.
fn repair<T: Scalar>(coords: &mut [T], interval: &Interval<T>) {
    let delta = min_gap(interval);
    let k = coords.len();
    coords.sort_by(|x, y| x.partial_cmp(y).expect("design coordinates must be ordered"));
    for (i, c) in coords.iter_mut().enumerate() {
        let lo = interval.a() + delta * crate::scalar::real_usize::<T>(i + 1);
        let hi = interval.b() - delta * crate::scalar::real_usize::<T>(k - i);
        *c = (*c).clamp(lo, hi);
    }
    for i in 1..k {
        if coords[i] - coords[i - 1] < delta {
            coords[i] = coords[i - 1] + delta;
        }
    }
}

fn design_from_interior<T: Scalar>(coords: &[T], interval: &Interval<T>) -> Design<T> {
    let mut pts = Vec::with_capacity(coords.len() + 2);
    pts.push(interval.a());
    pts.extend_from_slice(coords);
    pts.push(interval.b());
    Design::new(pts).expect("repaired coordinates must form a valid design")
}

fn sample_interior<T: Scalar>(
    rng: &mut ChaCha12Rng,
    dim: usize,
    interval: &Interval<T>,
) -> Vec<T> {
    let mut coords: Vec<T> = (0..dim)
        .map(|_| interval.a() + interval.length() * real::<T>(rng.random::<f64>()))
        .collect();
    repair(&mut coords, interval);
    coords
}

struct SwarmOutcome<T> {
    position: Vec<T>,
    objective: T,
    trace: Vec<T>,
    failures: usize,
}

fn run_swarm<T: Scalar>(
    eval: &Evaluator<T>,
    dim: usize,
    config: &PsoConfig,
    stream: u64,
    warm_starts: &[Vec<T>],
) -> Result<SwarmOutcome<T>> {
    let interval = &eval.search_interval;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut failures = 0usize;
    let mut evaluations = 0usize;

    let evaluate_with_resample =
        |coords: &mut Vec<T>, rng: &mut ChaCha12Rng, failures: &mut usize, evals: &mut usize| -> Option<T> {
            for _ in 0..50 {
                *evals += 1;
                match eval.evaluate(&design_from_interior(coords, interval)) {
                    Ok(v) => return Some(v),
                    Err(_) => {
                        *failures += 1;
                        *coords = sample_interior(rng, dim, interval);
                    }
                }
            }
            None
        };

    let swarm = config.swarm_size;
    let mut positions: Vec<Vec<T>> = Vec::with_capacity(swarm);
    for i in 0..swarm {
        if i < warm_starts.len() {
            let mut w = warm_starts[i].clone();
            repair(&mut w, interval);
            positions.push(w);
        } else {
            positions.push(sample_interior(&mut rng, dim, interval));
        }
    }
    let mut velocities: Vec<Vec<T>> = vec![vec![T::zero(); dim]; swarm];
    let mut best_positions = positions.clone();
    let mut best_values: Vec<T> = Vec::with_capacity(swarm);
    for p in positions.iter_mut() {
        match evaluate_with_resample(p, &mut rng, &mut failures, &mut evaluations) {
            Some(v) => best_values.push(v),
            None => {
                return Err(Error::Search(
                    "could not find a feasible particle position".into(),
                ))
            }
        }
    }
    best_positions.clone_from(&positions);
    let mut g_index = 0;
    for i in 1..swarm {
        if best_values[i] < best_values[g_index] {
            g_index = i;
        }
    }
    let mut g_position = best_positions[g_index].clone();
    let mut g_value = best_values[g_index];

    let inertia = real::<T>(config.inertia);
    let cognitive = real::<T>(config.cognitive);
    let social = real::<T>(config.social);
    let v_max = interval.length() * real::<T>(0.5);
    let mut trace = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        for i in 0..swarm {
            for d in 0..dim {
                let r1 = real::<T>(rng.random::<f64>());
                let r2 = real::<T>(rng.random::<f64>());
                let v = inertia * velocities[i][d]
                    + cognitive * r1 * (best_positions[i][d] - positions[i][d])
                    + social * r2 * (g_position[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-v_max, v_max);
                positions[i][d] += velocities[i][d];
            }
            repair(&mut positions[i], interval);
            let value =
                match evaluate_with_resample(&mut positions[i], &mut rng, &mut failures, &mut evaluations) {
                    Some(v) => v,
                    None => continue,
                };
            if value < best_values[i] {
                best_values[i] = value;
                best_positions[i].clone_from(&positions[i]);
                if value < g_value {
                    g_value = value;
                    g_position.clone_from(&positions[i]);
                }
            }
        }
        trace.push(g_value);
        if failures * 2 > evaluations {
            return Err(Error::Search(format!(
                "more than half of the objective evaluations failed ({failures}/{evaluations})"
            )));
        }
    }

    Ok(SwarmOutcome {
        position: g_position,
        objective: g_value,
        trace,
        failures,
    })
}

/// Golden-section line search for the minimum of `f` on [lo, hi].
fn golden_section<T: Scalar>(f: &mut impl FnMut(T) -> Option<T>, lo: T, hi: T) -> Option<(T, T)> {
    let phi = real::<T>(0.618_033_988_749_894_8);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2)?;
        }
    }
    if f1 <= f2 {
        Some((x1, f1))
    } else {
        Some((x2, f2))
    }
}

/// Coordinate-descent refinement in the search time scale. Accepts a move
/// only when it improves the objective, so the value never increases.
fn polish_in_search_scale<T: Scalar>(
    eval: &Evaluator<T>,
    coords: &mut Vec<T>,
    mut value: T,
) -> T {
    let interval = &eval.search_interval;
    let delta = min_gap(interval);
    let k = coords.len();
    if k == 0 {
        return value;
    }
    for _ in 0..40 {
        let before = value;
        for i in 0..k {
            let lo = if i == 0 { interval.a() } else { coords[i - 1] } + delta;
            let hi = if i + 1 == k { interval.b() } else { coords[i + 1] } - delta;
            if !(lo < hi) {
                continue;
            }
            let mut objective_at = |x: T| -> Option<T> {
                let mut candidate = coords.clone();
                candidate[i] = x;
                eval.evaluate(&design_from_interior(&candidate, interval)).ok()
            };
            if let Some((x, fx)) = golden_section(&mut objective_at, lo, hi) {
                if fx < value {
                    coords[i] = x;
                    value = fx;
                }
            }
        }
        let scale = before.abs().max(real::<T>(1e-30));
        if (before - value) / scale < real::<T>(1e-12) {
            break;
        }
    }
    value
}

/// Reflection of the interior coordinates about the interval midpoint; the
/// mirror image of a design in the original time scale.
fn reflect_interior<T: Scalar>(coords: &[T], interval: &Interval<T>) -> Vec<T> {
    let mut out: Vec<T> = coords
        .iter()
        .rev()
        .map(|&t| interval.a() + interval.b() - t)
        .collect();
    repair(&mut out, interval);
    out
}

fn lex_smaller<T: Scalar>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Particle swarm optimization of the interior design points with fixed
/// endpoints, best-of-restarts selection, a coordinate-descent polish and a
/// deterministic orientation tie-break for reflection-symmetric criteria.
pub fn optimize_design<T: Scalar>(
    objective: DesignObjective,
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    n: usize,
    interval: &Interval<T>,
    config: &PsoConfig,
) -> Result<SearchResult<T>> {
    config.validate()?;
    if n < 2 {
        return Err(Error::InvalidDesign(format!(
            "a design needs at least the two endpoints, got n = {n}"
        )));
    }
    let eval = Evaluator::new(objective, basis, kernel, interval)?;
    let dim = n - 2;

    if dim == 0 {
        let d = Design::new(vec![eval.search_interval.a(), eval.search_interval.b()])?;
        let value = eval.evaluate(&d)?;
        return Ok(SearchResult {
            design: eval.to_original(&d)?,
            objective_value: value,
            trace: vec![value],
            converged: true,
            failures: 0,
        });
    }

    // Warm starts: the uniform grid in the search scale and the image of the
    // uniform grid in the original scale.
    let mut warm: Vec<Vec<T>> = vec![Design::equidistant(&eval.search_interval, n)?
        .points()[1..n - 1]
        .to_vec()];
    let uniform_original = Design::equidistant(interval, n)?;
    if let Ok(mapped) = eval.from_original(&uniform_original) {
        warm.push(mapped.points()[1..n - 1].to_vec());
    }

    let mut best: Option<SwarmOutcome<T>> = None;
    let mut total_failures = 0usize;
    for restart in 0..config.restarts {
        let outcome = run_swarm(&eval, dim, config, restart as u64, &warm)?;
        total_failures += outcome.failures;
        let replace = match &best {
            None => true,
            Some(b) => outcome.objective < b.objective,
        };
        if replace {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one restart ran");
    let trace = best.trace.clone();

    // Deterministic refinement of the winner.
    let mut coords = best.position.clone();
    let value = polish_in_search_scale(&eval, &mut coords, best.objective);

    // Reflection-symmetric criteria have two equal optima; prefer the
    // lexicographically smaller orientation so results do not depend on the
    // seed. The reflection happens in the original time scale.
    let original = eval.to_original(&design_from_interior(&coords, &eval.search_interval))?;
    let reflected_original: Vec<T> = {
        let interior = &original.points()[1..n - 1];
        reflect_interior(interior, interval)
    };
    let reflected_design = design_from_interior(&reflected_original, interval);
    if let Ok(mut r_coords) = eval
        .from_original(&reflected_design)
        .map(|d| d.points()[1..n - 1].to_vec())
    {
        if let Ok(r_value) = eval.evaluate(&design_from_interior(&r_coords, &eval.search_interval)) {
            let r_value = polish_in_search_scale(&eval, &mut r_coords, r_value);
            let tie = (r_value - value).abs()
                <= real::<T>(1e-9) * value.abs().max(real::<T>(1e-30));
            let r_original =
                eval.to_original(&design_from_interior(&r_coords, &eval.search_interval))?;
            let take_reflected = if tie {
                lex_smaller(r_original.points(), original.points())
            } else {
                r_value < value
            };
            if take_reflected {
                coords = r_coords;
            }
        }
    }

    let final_design = eval.to_original(&design_from_interior(&coords, &eval.search_interval))?;
    // Report the objective as re-evaluated at the returned design.
    let objective_value = {
        let d = eval.from_original(&final_design)?;
        eval.evaluate(&d)?
    };

    let converged = {
        let len = trace.len();
        if len < 8 {
            true
        } else {
            let tail = trace[len - len / 4];
            let improvement = (tail - trace[len - 1]).abs();
            improvement <= real::<T>(1e-6) * trace[len - 1].abs().max(real::<T>(1e-30))
        }
    };

    Ok(SearchResult {
        design: final_design,
        objective_value,
        trace,
        converged,
        failures: total_failures,
    })
}

/// Deterministic coordinate-descent refinement of a feasible design under the
/// same objective contexts as [`optimize_design`]. The objective never
/// increases and the endpoints stay fixed.
pub fn polish<T: Scalar>(
    objective: DesignObjective,
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<SearchResult<T>> {
    design.check_spans(interval)?;
    let eval = Evaluator::new(objective, basis, kernel, interval)?;
    let search_design = eval.from_original(design)?;
    let n = design.n();
    let mut coords = search_design.points()[1..n - 1].to_vec();
    let start = eval.evaluate(&search_design)?;
    let value = polish_in_search_scale(&eval, &mut coords, start);
    let final_design = eval.to_original(&design_from_interior(&coords, &eval.search_interval))?;
    let objective_value = {
        let d = eval.from_original(&final_design)?;
        eval.evaluate(&d)?
    };
    Ok(SearchResult {
        design: final_design,
        objective_value,
        trace: vec![start, value],
        converged: true,
        failures: 0,
    })
}

/// Variance reference for efficiency reporting: the continuous-time variance
/// of the model, computed through the time change for non-Brownian kernels.
pub fn reference_variance<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    interval: &Interval<T>,
) -> Result<DMatrix<T>> {
    if matches!(kernel.kind(), KernelKind::Brownian) {
        Ok(continuous::c_matrix(basis, interval)?.c_inv)
    } else {
        Ok(continuous::blue_general_kernel(basis, kernel, interval)?.c_inv)
    }
}

/// Efficiency of the optimally weighted discrete estimator at a design under
/// any triangular kernel, evaluated in the Brownian time scale.
pub fn star_efficiency<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<T> {
    let est = star_estimator(basis, kernel, design, interval)?.0;
    Ok(est.efficiency())
}

/// Builds the optimally weighted discrete estimator for any triangular
/// kernel, returning it together with the per-point observation scaling
/// 1/v(t_i) that maps original observations into its time scale.
pub fn star_estimator<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<(crate::discrete::LinearEstimator<T>, Vec<T>)> {
    design.check_spans(interval)?;
    if matches!(kernel.kind(), KernelKind::Brownian) {
        let est = crate::discrete::LinearEstimator::optimal_weights_multi(basis, design, interval)?;
        let ones = vec![T::one(); design.n()];
        Ok((est, ones))
    } else {
        let tm = kernel.doob_transform(basis, interval)?;
        let mapped = tm.map_design_forward(design)?;
        let est = crate::discrete::LinearEstimator::optimal_weights_multi(
            &tm.basis,
            &mapped,
            &tm.interval,
        )?;
        let scale = tm.observation_scale(design);
        Ok((est, scale))
    }
}

/// WLSE efficiency at a design: tr of the continuous-time variance over tr of
/// the weighted-least-squares variance.
pub fn wlse_efficiency<T: Scalar>(
    basis: &RegressionBasis<T>,
    kernel: &TriangularKernel<T>,
    design: &Design<T>,
    interval: &Interval<T>,
) -> Result<T> {
    let reference = reference_variance(basis, kernel, interval)?;
    let var = wlse::wlse_variance(basis, kernel, design)?.variance;
    Ok(wlse::efficiency_of(&var, &reference))
}
