//! Synthetic experiments, multi-experiment least squares and grid posteriors.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::ident::{GramReport, IdentError, SensitivityEquations, DEFAULT_GRAM_TOL, NUMERICAL_ZERO};
use crate::signals::InputSignal;
use crate::sim::{integrate_vector, SimError, SolverConfig};
use crate::systems::{GeneralSystem, ParamMap, SystemError};

/// Default number of cells per posterior axis.
pub const DEFAULT_GRID_CELLS: usize = 141;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("no experiments given")]
    NoExperiments,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}`: initial value {value} outside [{lower}, {upper}]")]
    InitialOutOfBounds { name: String, value: f64, lower: f64, upper: f64 },
    #[error("the Jacobian vanishes identically for {}; unidentifiable at the initial guess", .params.join(", "))]
    AllNullJacobian { params: Vec<String> },
    #[error("no convergence after {} iterations (best cost {:e})", .best.iterations, .best.cost)]
    NotConverged { best: Box<FitResult> },
    #[error("noise level {0} must be positive for a likelihood")]
    InvalidNoise(f64),
    #[error("invalid posterior grid: {0}")]
    InvalidGrid(String),
    #[error("every grid cell has zero likelihood; model and data are incompatible")]
    AllCellsImpossible,
    #[error(transparent)]
    Ident(#[from] IdentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Sampled output of one input/output experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub signal: InputSignal,
    pub sample_times: Vec<f64>,
    pub observations: Vec<f64>,
    /// Known noise standard deviation; zero marks exact data.
    pub sigma: f64,
}

impl Experiment {
    pub fn new(signal: InputSignal, sample_times: Vec<f64>, observations: Vec<f64>, sigma: f64) -> Result<Self, EstimateError> {
        let e = Self { signal, sample_times, observations, sigma };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: String| Err(EstimateError::InvalidExperiment(m));
        if self.sample_times.len() != self.observations.len() {
            return bad(format!("{} times but {} observations", self.sample_times.len(), self.observations.len()));
        }
        if self.sample_times.is_empty() {
            return bad("no samples".into());
        }
        if self.sample_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("sample times must be finite and >= 0".into());
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sample times must be strictly increasing".into());
        }
        if *self.sample_times.last().expect("non-empty") <= 0.0 {
            return bad("the last sample time must be positive".into());
        }
        if self.observations.iter().any(|v| !v.is_finite()) {
            return bad("observations must be finite".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("noise level {} must be finite and >= 0", self.sigma));
        }
        self.signal.validate().map_err(|e| EstimateError::InvalidExperiment(e.to_string()))
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.sample_times.len());
        Self {
            signal: self.signal.clone(),
            sample_times: self.sample_times[..n].to_vec(),
            observations: self.observations[..n].to_vec(),
            sigma: self.sigma,
        }
    }

    fn span(&self) -> (f64, f64) {
        (0.0, *self.sample_times.last().expect("validated non-empty"))
    }

    /// Residual weight `1/sigma`; exact data is weighted as unit noise.
    fn weight(&self) -> f64 {
        if self.sigma > 0.0 {
            1.0 / self.sigma
        } else {
            1.0
        }
    }
}

fn solver_for(span: (f64, f64), cfg: &SolverConfig) -> SolverConfig {
    SolverConfig::with_step(cfg.h.min(span.1 - span.0))
}

fn pick_samples(times: &[f64], values: &[f64], samples: &[f64]) -> Vec<f64> {
    // the grid contains every sample exactly, so a forward merge suffices
    let mut out = Vec::with_capacity(samples.len());
    let mut i = 0;
    for &t in samples {
        while i + 1 < times.len() && times[i] < t - 1e-12 * t.abs().max(1.0) {
            i += 1;
        }
        out.push(values[i]);
    }
    out
}

/// Model output at the sample times of `signal`, at parameter vector `theta`.
pub(crate) fn model_output_at(
    system: &GeneralSystem,
    theta: &[f64],
    signal: &InputSignal,
    sample_times: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>, SimError> {
    let span = (0.0, *sample_times.last().expect("non-empty samples"));
    let traj = integrate_vector(system, theta, signal, span, &solver_for(span, cfg), sample_times)?;
    Ok(pick_samples(&traj.times, &traj.outputs, sample_times))
}

/// Simulates `system` and samples its output with i.i.d. Gaussian noise from
/// a generator seeded with `seed`.
pub fn synthesize_data(
    system: &GeneralSystem,
    params: &ParamMap,
    signal: &InputSignal,
    sample_times: &[f64],
    sigma: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Experiment, EstimateError> {
    let mut e = Experiment::new(signal.clone(), sample_times.to_vec(), vec![0.0; sample_times.len()], sigma)?;
    let theta = system.param_vector(params)?;
    let mut obs = model_output_at(system, &theta, signal, sample_times, cfg)?;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).map_err(|_| EstimateError::InvalidNoise(sigma))?;
        for v in &mut obs {
            *v += noise.sample(&mut rng);
        }
    }
    e.observations = obs;
    Ok(e)
}

/// A parameter estimated by [`least_squares_fit`]; all others stay fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(name: &str, initial: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.to_string(), initial, lower, upper }
    }

    pub fn unbounded(name: &str, initial: f64) -> Self {
        Self::new(name, initial, f64::NEG_INFINITY, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 200, initial_damping: 1e-3, step_tol: 1e-8, cost_tol: 1e-10 }
    }
}

/// `(J^T J)^+` at the optimum, with infinite variance along null directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub matrix: DMatrix<f64>,
    /// Spectrum of the weighted normal matrix `J^T J`.
    pub information: GramReport,
}

impl Covariance {
    fn from_information(information: GramReport) -> Self {
        let p = information.matrix.nrows();
        let mut matrix = DMatrix::zeros(p, p);
        for k in 0..information.rank {
            let v = information.eigenvectors.column(k);
            matrix += (v * v.transpose()) / information.eigenvalues[k];
        }
        Self { matrix, information }
    }

    pub fn null_directions(&self) -> &[DVector<f64>] {
        &self.information.null_directions
    }

    /// `v^T C v`, infinite when `v` has a component along a null direction.
    pub fn variance_along(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if self.null_directions().iter().any(|n| (n.dot(&v) / norm).abs() > 1e-6) {
            return f64::INFINITY;
        }
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    pub fn variance(&self, j: usize) -> f64 {
        let mut e = vec![0.0; self.matrix.nrows()];
        e[j] = 1.0;
        self.variance_along(&e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    /// Fixed and fitted values together.
    pub params: ParamMap,
    /// `sum (y_model - obs)^2 / sigma^2`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub covariance: Covariance,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.estimate[j])
    }
}

struct Problem<'a> {
    eqs: SensitivityEquations,
    experiments: &'a [Experiment],
    cfg: SolverConfig,
    base: Vec<f64>,
    free_idx: Vec<usize>,
}

impl Problem<'_> {
    fn theta(&self, free: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for (&i, &v) in self.free_idx.iter().zip(free) {
            theta[i] = v;
        }
        theta
    }

    fn residuals(&self, free: &[f64]) -> Result<Vec<f64>, SimError> {
        let theta = self.theta(free);
        let mut r = Vec::new();
        for e in self.experiments {
            let y = model_output_at(self.eqs.system(), &theta, &e.signal, &e.sample_times, &self.cfg)?;
            let w = e.weight();
            r.extend(y.iter().zip(&e.observations).map(|(m, o)| w * (m - o)));
        }
        Ok(r)
    }

    /// Weighted residuals, Jacobian and output scale.
    fn linearize(&self, free: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, f64), EstimateError> {
        let theta = self.theta(free);
        let mut r = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut scale = 1.0f64;
        for e in self.experiments {
            let span = e.span();
            let s = self.eqs.solve(&theta, &e.signal, span, &solver_for(span, &self.cfg), &e.sample_times)?;
            let s = s.at_times(&e.sample_times)?;
            let w = e.weight();
            for ((row, &y), &o) in s.rows.iter().zip(&s.nominal.outputs).zip(&e.observations) {
                r.push(w * (y - o));
                rows.push(self.free_idx.iter().map(|&j| w * row[j]).collect());
                scale = scale.max(w * y.abs());
            }
        }
        let jac = DMatrix::from_fn(rows.len(), self.free_idx.len(), |i, j| rows[i][j]);
        Ok((r, jac, scale))
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn project(v: f64, p: &FreeParam) -> f64 {
    v.clamp(p.lower, p.upper)
}

/// Damped Gauss–Newton fit of the free parameters to all experiments jointly.
pub fn least_squares_fit(
    system: &GeneralSystem,
    experiments: &[Experiment],
    base: &ParamMap,
    free: &[FreeParam],
    cfg: &SolverConfig,
    opts: &FitOptions,
) -> Result<FitResult, EstimateError> {
    if experiments.is_empty() {
        return Err(EstimateError::NoExperiments);
    }
    for e in experiments {
        e.validate()?;
    }
    let mut all = base.clone();
    let mut free_idx = Vec::with_capacity(free.len());
    for p in free {
        let j = system.param_index(&p.name).ok_or_else(|| EstimateError::UnknownParameter(p.name.clone()))?;
        if !(p.lower <= p.initial && p.initial <= p.upper) || !p.initial.is_finite() {
            return Err(EstimateError::InitialOutOfBounds {
                name: p.name.clone(),
                value: p.initial,
                lower: p.lower,
                upper: p.upper,
            });
        }
        all.insert(p.name.clone(), p.initial);
        free_idx.push(j);
    }
    let problem = Problem {
        eqs: SensitivityEquations::new(system),
        experiments,
        cfg: *cfg,
        base: system.param_vector(&all)?,
        free_idx,
    };
    let names: Vec<String> = free.iter().map(|p| p.name.clone()).collect();
    let n_obs: usize = experiments.iter().map(|e| e.sample_times.len()).sum();

    let mut theta: Vec<f64> = free.iter().map(|p| p.initial).collect();
    let (mut r, mut jac, mut scale) = problem.linearize(&theta)?;
    let floor = |scale: f64| n_obs as f64 * (NUMERICAL_ZERO * scale).powi(2);
    let null: Vec<String> = (0..names.len())
        .filter(|&j| jac.column(j).norm_squared() <= floor(scale))
        .map(|j| names[j].clone())
        .collect();
    if !null.is_empty() {
        return Err(EstimateError::AllNullJacobian { params: null });
    }

    let mut cost = cost_of(&r);
    let mut damping = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        if cost <= floor(scale) {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let diag_max = jtj.diagonal().amax();
        let mut accepted = false;
        while damping < 1e16 {
            let mut lhs = jtj.clone();
            for k in 0..lhs.nrows() {
                lhs[(k, k)] += damping * jtj[(k, k)].max(1e-12 * diag_max);
            }
            let Some(delta) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).zip(free).map(|((t, d), p)| project(t + d, p)).collect();
            let trial_cost = problem.residuals(&trial).map(|r| cost_of(&r)).unwrap_or(f64::INFINITY);
            if trial_cost < cost {
                let step: f64 = theta.iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let size: f64 = theta.iter().map(|a| a * a).sum::<f64>().sqrt();
                let decrease = (cost - trial_cost) / cost;
                theta = trial;
                damping = (damping / 10.0).max(1e-15);
                converged = step <= opts.step_tol * size.max(1e-12) || decrease < opts.cost_tol;
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            // no descent direction improves the cost: stationary point
            converged = true;
        }
        (r, jac, scale) = problem.linearize(&theta)?;
        cost = cost_of(&r);
    }

    let info = GramReport::from_matrix(names.clone(), jac.transpose() * &jac, DEFAULT_GRAM_TOL, floor(scale));
    let mut params = all;
    for (n, v) in names.iter().zip(&theta) {
        params.insert(n.clone(), *v);
    }
    let result = FitResult {
        names,
        estimate: theta,
        params,
        cost,
        iterations,
        converged,
        covariance: Covariance::from_information(info),
    };
    if converged {
        Ok(result)
    } else {
        Err(EstimateError::NotConverged { best: Box::new(result) })
    }
}

/// Evenly spaced points including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Discrete posterior over a tensor grid of parameter values, stored as
/// normalized log weights. Cells are ordered with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub names: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
}

impl PosteriorGrid {
    pub fn uniform(names: &[&str], axes: Vec<Vec<f64>>) -> Result<Self, EstimateError> {
        if names.len() != axes.len() || names.is_empty() {
            return Err(EstimateError::InvalidGrid("one axis per parameter is required".into()));
        }
        if axes.iter().any(|a| a.is_empty() || a.iter().any(|v| !v.is_finite())) {
            return Err(EstimateError::InvalidGrid("axes must be non-empty and finite".into()));
        }
        let cells: usize = axes.iter().map(Vec::len).product();
        let mut grid = Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            axes,
            log_weights: vec![0.0; cells],
        };
        grid.normalize()?;
        Ok(grid)
    }

    pub fn n_cells(&self) -> usize {
        self.log_weights.len()
    }

    /// Per-axis indices of cell `k`.
    pub fn cell_indices(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            idx[d] = k % axis.len();
            k /= axis.len();
        }
        idx
    }

    pub fn cell_values(&self, k: usize) -> Vec<f64> {
        self.cell_indices(k).iter().zip(&self.axes).map(|(&i, a)| a[i]).collect()
    }

    pub fn normalize(&mut self) -> Result<(), EstimateError> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(EstimateError::AllCellsImpossible);
        }
        let log_z = max + self.log_weights.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
        for w in &mut self.log_weights {
            *w -= log_z;
        }
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Values at the most probable cell (first one on ties).
    pub fn mode(&self) -> Vec<f64> {
        let best = self
            .log_weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &w)| if w > acc.1 { (k, w) } else { acc });
        self.cell_values(best.0)
    }

    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.axes[axis].len()];
        for (k, p) in self.probabilities().into_iter().enumerate() {
            m[self.cell_indices(k)[axis]] += p;
        }
        m
    }

    pub fn mean(&self, axis: usize) -> f64 {
        self.marginal(axis).iter().zip(&self.axes[axis]).map(|(p, v)| p * v).sum()
    }

    pub fn std(&self, axis: usize) -> f64 {
        let mean = self.mean(axis);
        let var: f64 = self.marginal(axis).iter().zip(&self.axes[axis]).map(|(p, v)| p * (v - mean).powi(2)).sum();
        var.max(0.0).sqrt()
    }

    pub fn axis_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Gaussian log-likelihood of `e` under parameter vector `theta`.
fn log_likelihood(system: &GeneralSystem, theta: &[f64], e: &Experiment, cfg: &SolverConfig) -> f64 {
    match model_output_at(system, theta, &e.signal, &e.sample_times, cfg) {
        Ok(y) => {
            let ss: f64 = y.iter().zip(&e.observations).map(|(m, o)| ((m - o) / e.sigma).powi(2)).sum();
            let n = y.len() as f64;
            let ll = -0.5 * ss - n * (e.sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
            if ll.is_nan() {
                f64::NEG_INFINITY
            } else {
                ll
            }
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Bayes rule on the grid: adds each cell's log-likelihood of `e` and renormalizes.
/// Parameters not on the grid are taken from `base`.
pub fn bayes_update(
    prior: &PosteriorGrid,
    e: &Experiment,
    system: &GeneralSystem,
    base: &ParamMap,
    cfg: &SolverConfig,
) -> Result<PosteriorGrid, EstimateError> {
    e.validate()?;
    if !(e.sigma > 0.0) {
        return Err(EstimateError::InvalidNoise(e.sigma));
    }
    let idx = prior
        .names
        .iter()
        .map(|n| system.param_index(n).ok_or_else(|| EstimateError::UnknownParameter(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut all = base.clone();
    for (n, axis) in prior.names.iter().zip(&prior.axes) {
        all.insert(n.clone(), axis[0]);
    }
    let base_theta = system.param_vector(&all)?;
    let log_weights: Vec<f64> = (0..prior.n_cells())
        .into_par_iter()
        .map(|k| {
            let w = prior.log_weights[k];
            if w == f64::NEG_INFINITY {
                return w;
            }
            let mut theta = base_theta.clone();
            for (&j, v) in idx.iter().zip(prior.cell_values(k)) {
                theta[j] = v;
            }
            w + log_likelihood(system, &theta, e, cfg)
        })
        .collect();
    let mut post = PosteriorGrid { names: prior.names.clone(), axes: prior.axes.clone(), log_weights };
    post.normalize()?;
    Ok(post)
}
