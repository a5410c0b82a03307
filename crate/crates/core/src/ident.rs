//! Local identifiability: forward sensitivities, Gram and Fisher matrices,
//! Cramér–Rao bounds, and the direct derivative-based estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::expr::{Env, Expr, ExprError, Var};
use crate::lti::SampledFunction;
use crate::signals::InputSignal;
use crate::sim::{integrate_dynamics, time_grid, Dynamics, SimError, SolverConfig, Trajectory};
use crate::systems::{GeneralSystem, ParamMap, SystemError};

/// Default relative eigenvalue threshold separating informative directions
/// from null directions.
pub const DEFAULT_GRAM_TOL: f64 = 1e-6;
/// Sensitivities whose RMS is below this fraction of the output scale are
/// indistinguishable from round-off; it sets an absolute eigenvalue floor.
pub(crate) const NUMERICAL_ZERO: f64 = 1e-12;
/// A null eigenvector component above this makes the parameter's bound infinite.
const NULL_COMPONENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("time {0} is not on the sensitivity grid")]
    TimeNotSampled(f64),
    #[error("need at least {needed} samples in the fit window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("polynomial degree {degree} is below derivative order {order}")]
    DegreeBelowOrder { degree: usize, order: u32 },
    #[error("invalid fit window {0}")]
    InvalidWindow(f64),
    #[error("initial slope estimate {0:e} is too small to divide by")]
    ZeroSlope(f64),
    #[error("pulse slope estimate {0} gives 1 + slope <= 0, outside the logarithm's domain")]
    PulseDomain(f64),
    #[error("pulse estimator needs a unit pulse ending at t = 1, got t_off = {0}")]
    UnsupportedPulseEnd(f64),
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("divisor interval [{0}, {1}] contains zero")]
    IntervalContainsZero(f64, f64),
    #[error("noise level {0} must be positive")]
    InvalidNoise(f64),
    #[error("at least {0} time points are required")]
    TooFewPoints(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    System(#[from] SystemError),
}

impl From<ExprError> for IdentError {
    fn from(e: ExprError) -> Self {
        IdentError::Sim(SimError::Expr(e))
    }
}

/// Output sensitivities `dy/dtheta_j` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub param_names: Vec<String>,
    pub times: Vec<f64>,
    /// `rows[i][j] = dy/dtheta_j (t_i)`.
    pub rows: Vec<Vec<f64>>,
    /// Nominal trajectory the sensitivities are taken along.
    pub nominal: Trajectory,
}

impl SensitivityTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.param_names.iter().position(|n| n == name).map(|j| self.column(j))
    }

    /// Restricts to a subset of parameters, in the given order; the others
    /// are treated as known.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Self, IdentError> {
        let idx = names
            .iter()
            .map(|n| {
                self.param_names
                    .iter()
                    .position(|p| p == n.as_ref())
                    .ok_or_else(|| IdentError::UnknownParameter(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            param_names: idx.iter().map(|&j| self.param_names[j].clone()).collect(),
            times: self.times.clone(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
            nominal: self.nominal.clone(),
        })
    }

    /// Keeps only the rows at `times` (each must lie on the grid).
    pub fn at_times(&self, times: &[f64]) -> Result<Self, IdentError> {
        let mut keep = Vec::with_capacity(times.len());
        for &t in times {
            let tol = 1e-9 * t.abs().max(1.0);
            keep.push(self.nominal.index_of(t, tol).ok_or(IdentError::TimeNotSampled(t))?);
        }
        let nominal = Trajectory {
            state_names: self.nominal.state_names.clone(),
            times: keep.iter().map(|&i| self.nominal.times[i]).collect(),
            inputs: keep.iter().map(|&i| self.nominal.inputs[i]).collect(),
            states: keep.iter().map(|&i| self.nominal.states[i].clone()).collect(),
            outputs: keep.iter().map(|&i| self.nominal.outputs[i]).collect(),
        };
        Ok(Self {
            param_names: self.param_names.clone(),
            times: nominal.times.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            nominal,
        })
    }

    fn output_scale(&self) -> f64 {
        self.nominal.outputs.iter().fold(1.0f64, |m, y| m.max(y.abs()))
    }
}

/// Symbolic Jacobians of a system's right-hand side and output.
#[derive(Debug, Clone)]
pub struct SensitivityEquations {
    system: GeneralSystem,
    dfdx: Vec<Vec<Expr>>,
    dfdp: Vec<Vec<Expr>>,
    dgdx: Vec<Expr>,
    dgdp: Vec<Expr>,
}

impl SensitivityEquations {
    pub fn new(system: &GeneralSystem) -> Self {
        let (n, p) = (system.n_states(), system.n_params());
        let dfdx = system.rhs().iter().map(|f| (0..n).map(|k| f.diff(Var::State(k))).collect()).collect();
        let dfdp = system.rhs().iter().map(|f| (0..p).map(|j| f.diff(Var::Param(j))).collect()).collect();
        let g = system.output();
        Self {
            system: system.clone(),
            dfdx,
            dfdp,
            dgdx: (0..n).map(|k| g.diff(Var::State(k))).collect(),
            dgdp: (0..p).map(|j| g.diff(Var::Param(j))).collect(),
        }
    }

    pub fn system(&self) -> &GeneralSystem {
        &self.system
    }

    /// Integrates states and sensitivities at the parameter vector `theta`.
    pub fn solve(
        &self,
        theta: &[f64],
        signal: &InputSignal,
        span: (f64, f64),
        cfg: &SolverConfig,
        samples: &[f64],
    ) -> Result<SensitivityTrajectory, IdentError> {
        let sys = &self.system;
        let (n, p) = (sys.n_states(), sys.n_params());
        let grid = time_grid(span.0, span.1, cfg.h, &signal.breakpoints(), samples)?;
        let mut z0 = vec![0.0; n * (1 + p)];
        z0[..n].copy_from_slice(sys.x0());
        let augmented = Augmented { eqs: self, theta };
        let solution = integrate_dynamics(&augmented, &z0, signal, &grid)?;

        let mut states = Vec::with_capacity(grid.len());
        let mut inputs = Vec::with_capacity(grid.len());
        let mut outputs = Vec::with_capacity(grid.len());
        let mut rows = Vec::with_capacity(grid.len());
        for (&t, z) in grid.iter().zip(&solution) {
            let x = &z[..n];
            let u = signal.eval(t);
            let env = Env { states: x, params: theta, input: u, time: t };
            outputs.push(sys.output().eval(&env)?);
            let gx = eval_all(&self.dgdx, &env)?;
            let mut row = eval_all(&self.dgdp, &env)?;
            for (j, r) in row.iter_mut().enumerate() {
                let s = &z[n * (1 + j)..n * (2 + j)];
                *r += gx.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
            }
            rows.push(row);
            states.push(x.to_vec());
            inputs.push(u);
        }
        let nominal = Trajectory { state_names: sys.state_names().to_vec(), times: grid.clone(), inputs, states, outputs };
        Ok(SensitivityTrajectory { param_names: sys.param_names().to_vec(), times: grid, rows, nominal })
    }
}

fn eval_all(exprs: &[Expr], env: &Env<'_>) -> Result<Vec<f64>, ExprError> {
    exprs.iter().map(|e| if e.is_zero() { Ok(0.0) } else { e.eval(env) }).collect()
}

/// State `[x, s_1, ..., s_p]` with `ds_j/dt = (df/dx) s_j + df/dtheta_j`.
struct Augmented<'a> {
    eqs: &'a SensitivityEquations,
    theta: &'a [f64],
}

impl Dynamics for Augmented<'_> {
    fn dim(&self) -> usize {
        let sys = &self.eqs.system;
        sys.n_states() * (1 + sys.n_params())
    }

    fn deriv(&self, t: f64, z: &[f64], u: f64, dz: &mut [f64]) -> Result<(), ExprError> {
        let sys = &self.eqs.system;
        let (n, p) = (sys.n_states(), sys.n_params());
        let env = Env { states: &z[..n], params: self.theta, input: u, time: t };
        for (d, f) in dz[..n].iter_mut().zip(sys.rhs()) {
            *d = f.eval(&env)?;
        }
        let jac = self.eqs.dfdx.iter().map(|row| eval_all(row, &env)).collect::<Result<Vec<_>, _>>()?;
        for j in 0..p {
            let s = &z[n * (1 + j)..n * (2 + j)];
            for i in 0..n {
                let forcing = if self.eqs.dfdp[i][j].is_zero() { 0.0 } else { self.eqs.dfdp[i][j].eval(&env)? };
                dz[n * (1 + j) + i] = forcing + jac[i].iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(())
    }
}

/// Output sensitivities to every parameter of `system` along the trajectory
/// driven by `signal`.
pub fn sensitivity_trajectories(
    system: &GeneralSystem,
    params: &ParamMap,
    signal: &InputSignal,
    span: (f64, f64),
    cfg: &SolverConfig,
) -> Result<SensitivityTrajectory, IdentError> {
    sensitivity_with_samples(system, params, signal, span, cfg, &[])
}

/// Like [`sensitivity_trajectories`], with `samples` forced onto the grid.
pub fn sensitivity_with_samples(
    system: &GeneralSystem,
    params: &ParamMap,
    signal: &InputSignal,
    span: (f64, f64),
    cfg: &SolverConfig,
    samples: &[f64],
) -> Result<SensitivityTrajectory, IdentError> {
    let theta = system.param_vector(params)?;
    SensitivityEquations::new(system).solve(&theta, signal, span, cfg, samples)
}

/// Spectral summary of a positive semidefinite information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub param_names: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` pairs with `eigenvalues[k]`; each has its largest
    /// component positive.
    pub eigenvectors: DMatrix<f64>,
    pub rank: usize,
    /// Eigenvalues at or below this are null.
    pub threshold: f64,
    pub null_directions: Vec<DVector<f64>>,
}

impl GramReport {
    pub(crate) fn from_matrix(param_names: Vec<String>, matrix: DMatrix<f64>, rel_tol: f64, floor: f64) -> Self {
        let p = matrix.nrows();
        if p == 0 {
            return Self {
                param_names,
                matrix,
                eigenvalues: vec![],
                eigenvectors: DMatrix::zeros(0, 0),
                rank: 0,
                threshold: 0.0,
                null_directions: vec![],
            };
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut eigenvectors = DMatrix::zeros(p, p);
        for (k, &i) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.neg_mut();
            }
            eigenvectors.set_column(k, &v);
        }
        let threshold = (rel_tol * eigenvalues[0].max(0.0)).max(floor);
        let rank = eigenvalues.iter().filter(|&&l| l > threshold).count();
        let null_directions = (rank..p).map(|k| eigenvectors.column(k).into_owned()).collect();
        Self { param_names, matrix, eigenvalues, eigenvectors, rank, threshold, null_directions }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Largest absolute entry in the column of parameter `name`.
    pub fn column_max(&self, name: &str) -> Option<f64> {
        let j = self.param_names.iter().position(|n| n == name)?;
        Some(self.matrix.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let m = times.len();
    (0..m)
        .map(|i| {
            let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
            let right = if i + 1 < m { times[i + 1] - times[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn weighted_gram(rows: &[Vec<f64>], weights: &[f64], p: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(p, p);
    for (row, &w) in rows.iter().zip(weights) {
        for a in 0..p {
            for b in a..p {
                g[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Identifiability Gram matrix `int S^T S dt` (trapezoid) with the default threshold.
pub fn gram_matrix(s: &SensitivityTrajectory) -> Result<GramReport, IdentError> {
    gram_matrix_with_tol(s, DEFAULT_GRAM_TOL)
}

pub fn gram_matrix_with_tol(s: &SensitivityTrajectory, rel_tol: f64) -> Result<GramReport, IdentError> {
    if s.len() < 2 {
        return Err(IdentError::TooFewPoints(2));
    }
    let weights = trapezoid_weights(&s.times);
    let g = weighted_gram(&s.rows, &weights, s.n_params());
    let span = s.times[s.len() - 1] - s.times[0];
    let floor = span * (NUMERICAL_ZERO * s.output_scale()).powi(2);
    Ok(GramReport::from_matrix(s.param_names.clone(), g, rel_tol, floor))
}

/// Fisher information over the sample grid and the Cramér–Rao bounds it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct CramerRao {
    pub sigma: f64,
    pub fim: GramReport,
    /// Per-parameter variance lower bounds; infinite along null directions.
    pub crb: Vec<f64>,
}

impl CramerRao {
    pub fn bound(&self, name: &str) -> Option<f64> {
        self.fim.param_names.iter().position(|n| n == name).map(|j| self.crb[j])
    }
}

/// `FIM = sum_i S_i^T S_i / sigma^2`; bounds are the diagonal of its pseudo-inverse.
pub fn fisher_cramer_rao(s: &SensitivityTrajectory, sigma: f64) -> Result<CramerRao, IdentError> {
    fisher_cramer_rao_with_tol(s, sigma, DEFAULT_GRAM_TOL)
}

pub fn fisher_cramer_rao_with_tol(s: &SensitivityTrajectory, sigma: f64, rel_tol: f64) -> Result<CramerRao, IdentError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(IdentError::InvalidNoise(sigma));
    }
    if s.is_empty() {
        return Err(IdentError::TooFewPoints(1));
    }
    let p = s.n_params();
    let weights = vec![1.0 / (sigma * sigma); s.len()];
    let fim = weighted_gram(&s.rows, &weights, p);
    let floor = s.len() as f64 * (NUMERICAL_ZERO * s.output_scale() / sigma).powi(2);
    let report = GramReport::from_matrix(s.param_names.clone(), fim, rel_tol, floor);
    let crb = (0..p)
        .map(|j| {
            if report.null_directions.iter().any(|v| v[j].abs() > NULL_COMPONENT_TOL) {
                return f64::INFINITY;
            }
            (0..report.rank).map(|k| report.eigenvectors[(j, k)].powi(2) / report.eigenvalues[k]).sum()
        })
        .collect();
    Ok(CramerRao { sigma, fim: report, crb })
}

/// Which samples a derivative fit uses relative to its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `[t0 - w, t0]`
    Left,
    /// `[t0, t0 + w]`
    Right,
    /// `[t0 - w/2, t0 + w/2]`
    Central,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "central" => Ok(Side::Central),
            other => Err(format!("unknown side `{other}` (expected left, right or central)")),
        }
    }
}

/// Default `(window, degree)` for a derivative fit of the given order.
pub fn default_fit_window(order: u32) -> (f64, usize) {
    if order <= 2 {
        (0.1, 4)
    } else {
        (0.2, 6)
    }
}

/// Estimates the `order`-th derivative of `f` at `t0` from a least-squares
/// polynomial fit over a one- or two-sided window.
pub fn fit_derivative(
    f: &SampledFunction,
    t0: f64,
    order: u32,
    side: Side,
    window: f64,
    degree: usize,
) -> Result<f64, IdentError> {
    if degree < order as usize {
        return Err(IdentError::DegreeBelowOrder { degree, order });
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(IdentError::InvalidWindow(window));
    }
    let (lo, hi) = match side {
        Side::Left => (t0 - window, t0),
        Side::Right => (t0, t0 + window),
        Side::Central => (t0 - 0.5 * window, t0 + 0.5 * window),
    };
    let tol = 1e-9 * f.h();
    let picked: Vec<(f64, f64)> = f
        .times()
        .zip(f.values())
        .filter(|(t, _)| *t >= lo - tol && *t <= hi + tol)
        .map(|(t, &v)| ((t - t0) / window, v))
        .collect();
    let needed = degree + 2;
    if picked.len() < needed {
        return Err(IdentError::InsufficientSamples { needed, found: picked.len() });
    }
    let vander = DMatrix::from_fn(picked.len(), degree + 1, |i, k| picked[i].0.powi(k as i32));
    let rhs = DVector::from_iterator(picked.len(), picked.iter().map(|p| p.1));
    let coeffs = vander
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|_| IdentError::InsufficientSamples { needed, found: picked.len() })?;
    let factorial: f64 = (1..=order).map(f64::from).product();
    Ok(factorial * coeffs[order as usize] / window.powi(order as i32))
}

fn fit_default(f: &SampledFunction, t0: f64, order: u32) -> Result<f64, IdentError> {
    let (window, degree) = default_fit_window(order);
    fit_derivative(f, t0, order, Side::Right, window, degree)
}

/// `a = -K''(0) / K'(0)` from a sampled step response.
pub fn estimate_a_from_step(k: &SampledFunction) -> Result<f64, IdentError> {
    let d1 = fit_default(k, k.t0(), 1)?;
    if d1.abs() < 1e-12 {
        return Err(IdentError::ZeroSlope(d1));
    }
    let d2 = fit_default(k, k.t0(), 2)?;
    Ok(-d2 / d1)
}

/// `lambda = y''''(0+) / 2` from the lambda-system output under a unit ramp.
pub fn estimate_lambda_from_ramp(y: &SampledFunction) -> Result<f64, IdentError> {
    Ok(fit_default(y, y.t0(), 4)? / 2.0)
}

/// `lambda = -ln(1 + s)` for the right slope `s = y'(1+)` after a unit pulse.
pub fn lambda_from_pulse_slope(slope: f64) -> Result<f64, IdentError> {
    if !(1.0 + slope > 0.0) {
        return Err(IdentError::PulseDomain(slope));
    }
    Ok(-slope.ln_1p())
}

/// Right slope of `y` at the end of the pulse.
pub fn pulse_end_slope(y: &SampledFunction, t_off: f64) -> Result<f64, IdentError> {
    fit_default(y, t_off, 1)
}

/// `lambda` from the lambda-system output under the unit pulse on `[0, 1)`.
pub fn estimate_lambda_from_pulse(y: &SampledFunction, t_off: f64) -> Result<f64, IdentError> {
    if t_off != 1.0 {
        return Err(IdentError::UnsupportedPulseEnd(t_off));
    }
    lambda_from_pulse_slope(pulse_end_slope(y, t_off)?)
}

/// Closed real interval; a point is `[v, v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IdentError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(IdentError::InvalidInterval(lo, hi));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn div(&self, rhs: &Interval) -> Result<Interval, IdentError> {
        if rhs.contains(0.0) {
            return Err(IdentError::IntervalContainsZero(rhs.lo, rhs.hi));
        }
        let q = [self.lo / rhs.lo, self.lo / rhs.hi, self.hi / rhs.lo, self.hi / rhs.hi];
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval { lo, hi })
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

impl std::str::FromStr for Interval {
    type Err = IdentError;

    /// Accepts `v` or `lo,hi`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IdentError::InvalidInterval(f64::NAN, f64::NAN);
        let parts: Vec<&str> = s.trim().trim_start_matches('[').trim_end_matches(']').split(',').collect();
        let nums = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
        match nums.as_slice() {
            [v] => Interval::new(*v, *v),
            [lo, hi] => Interval::new(*lo, *hi),
            _ => Err(bad()),
        }
    }
}

/// Gray-box propagation `b = K'(0) / c`.
pub fn propagate_gray_box(kprime0: Interval, c: Interval) -> Result<Interval, IdentError> {
    kprime0.div(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{closed_form_output, integrate};
    use crate::systems::{get_registry_model, params};

    fn model(id: &str) -> GeneralSystem {
        get_registry_model(id).unwrap().system
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn scalar_step_sensitivities() {
        let p = params(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let s = sensitivity_trajectories(&model("scalar-lti"), &p, &InputSignal::step(1.0).unwrap(), (0.0, 5.0), &cfg())
            .unwrap();
        assert_eq!(s.rows[0], vec![0.0, 0.0, 0.0]);
        for (t, row) in s.times.iter().zip(&s.rows) {
            let expected = 1.0 - (-t).exp();
            assert!((row[1] - expected).abs() < 1e-6);
            assert!((row[2] - expected).abs() < 1e-6);
            // dy/da = -bc/a^2 (1 - e^{-at}) + bc t e^{-at} / a
            let da = -(1.0 - (-t).exp()) + t * (-t).exp();
            assert!((row[0] - da).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_invisible_under_step_visible_under_ramp() {
        let p = params(&[("lambda", 1.0), ("a_tot", 2.0)]);
        let sys = model("lambda-system");
        let step = sensitivity_trajectories(&sys, &p, &InputSignal::step(1.0).unwrap(), (0.0, 5.0), &cfg()).unwrap();
        assert!(step.column_by_name("lambda").unwrap().iter().all(|v| v.abs() <= 1e-8));
        let ramp = sensitivity_trajectories(&sys, &p, &InputSignal::ramp(1.0).unwrap(), (0.0, 5.0), &cfg()).unwrap();
        let peak = ramp.column_by_name("lambda").unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak >= 0.05, "peak {peak}");
    }

    #[test]
    fn ramp_sensitivity_matches_closed_form_difference() {
        let sys = model("lambda-system");
        let sig = InputSignal::ramp(1.0).unwrap();
        let s = sensitivity_trajectories(&sys, &params(&[("lambda", 1.0), ("a_tot", 2.0)]), &sig, (0.0, 3.0), &cfg())
            .unwrap();
        let d = 1e-6;
        for (i, &t) in s.times.iter().enumerate().step_by(250) {
            let up = closed_form_output("lambda-system", &params(&[("lambda", 1.0 + d), ("a_tot", 2.0)]), &sig, t).unwrap();
            let dn = closed_form_output("lambda-system", &params(&[("lambda", 1.0 - d), ("a_tot", 2.0)]), &sig, t).unwrap();
            assert!(((up - dn) / (2.0 * d) - s.rows[i][0]).abs() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn select_and_at_times() {
        let p = params(&[("a", 1.0), ("b", 2.0), ("c", 1.0)]);
        let s = sensitivity_trajectories(&model("scalar-lti"), &p, &InputSignal::step(1.0).unwrap(), (0.0, 1.0), &cfg())
            .unwrap();
        let sub = s.select(&["c", "a"]).unwrap();
        assert_eq!(sub.param_names, vec!["c", "a"]);
        assert_eq!(sub.rows[500], vec![s.rows[500][2], s.rows[500][0]]);
        assert!(matches!(s.select(&["q"]), Err(IdentError::UnknownParameter(_))));
        let pts = s.at_times(&[0.25, 0.5]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts.rows[1], s.rows[500]);
        assert!(matches!(s.at_times(&[0.2505]), Err(IdentError::TimeNotSampled(_))));
    }

    #[test]
    fn scalar_gram_null_direction() {
        let p = params(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let s = sensitivity_trajectories(&model("scalar-lti"), &p, &InputSignal::step(1.0).unwrap(), (0.0, 10.0), &cfg())
            .unwrap();
        let g = gram_matrix(&s).unwrap();
        assert_eq!(g.rank, 2);
        assert_eq!(g.null_directions.len(), 1);
        let v = &g.null_directions[0];
        let target = DVector::from_vec(vec![0.0, 1.0, -1.0]).normalize();
        assert!(v.dot(&target).abs() >= 0.999);
        assert!(g.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!((g.matrix.clone() - g.matrix.transpose()).amax() == 0.0);
    }

    #[test]
    fn zero_sensitivity_has_rank_zero() {
        let p = params(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let s = sensitivity_trajectories(&model("scalar-lti"), &p, &InputSignal::Zero, (0.0, 2.0), &cfg()).unwrap();
        let g = gram_matrix(&s).unwrap();
        assert_eq!(g.rank, 0);
        assert_eq!(g.null_directions.len(), 3);
        assert_eq!(g.matrix.amax(), 0.0);
        let crb = fisher_cramer_rao(&s, 0.1).unwrap();
        assert!(crb.crb.iter().all(|b| b.is_infinite()));
    }

    #[test]
    fn step_gives_no_lambda_information() {
        let p = params(&[("lambda", 1.0), ("a_tot", 2.0)]);
        let s = sensitivity_trajectories(&model("lambda-system"), &p, &InputSignal::step(1.0).unwrap(), (0.0, 5.0), &cfg())
            .unwrap();
        let only = s.select(&["lambda"]).unwrap();
        let g = gram_matrix(&only).unwrap();
        assert_eq!(g.rank, 0);
        assert!(g.matrix[(0, 0)].abs() <= 1e-12);
        let full = fisher_cramer_rao(&s, 0.01).unwrap();
        assert!(full.bound("lambda").unwrap().is_infinite());
        assert!(full.bound("a_tot").unwrap().is_finite());
    }

    #[test]
    fn crb_scales_with_noise() {
        let p = params(&[("lambda", 1.0), ("a_tot", 2.0)]);
        let s = sensitivity_trajectories(&model("lambda-system"), &p, &InputSignal::ramp(1.0).unwrap(), (0.0, 3.0), &cfg())
            .unwrap();
        let one = fisher_cramer_rao(&s, 0.01).unwrap();
        let two = fisher_cramer_rao(&s, 0.02).unwrap();
        for (a, b) in one.crb.iter().zip(&two.crb) {
            assert!(a.is_finite());
            assert!((b / a - 4.0).abs() < 1e-9);
        }
        assert!(matches!(fisher_cramer_rao(&s, 0.0), Err(IdentError::InvalidNoise(_))));
    }

    #[test]
    fn near_degenerate_rates_inflate_bound() {
        let sys = model("lambda-system-split");
        let bound = |lz: f64| {
            let p = params(&[("lambda_x", 1.0), ("lambda_z", lz), ("a_tot", 2.0)]);
            let s = sensitivity_trajectories(&sys, &p, &InputSignal::step(1.0).unwrap(), (0.0, 5.0), &cfg()).unwrap();
            fisher_cramer_rao(&s, 0.01).unwrap().bound("lambda_x").unwrap()
        };
        let (far, near) = (bound(0.5), bound(0.95));
        assert!(far.is_finite() && near.is_finite());
        assert!(near / far >= 10.0, "ratio {}", near / far);
    }

    fn sampled_output(id: &str, p: &ParamMap, sig: &InputSignal, t1: f64) -> SampledFunction {
        let traj = integrate(&model(id), p, sig, (0.0, t1), &cfg()).unwrap();
        SampledFunction::from_samples(&traj.times, traj.outputs).unwrap()
    }

    #[test]
    fn derivative_fits() {
        let f = SampledFunction::from_fn(0.0, 1e-3, 1001, |t| 1.0 - (-t).exp()).unwrap();
        let d1 = fit_derivative(&f, 0.0, 1, Side::Right, 0.1, 4).unwrap();
        assert!((d1 - 1.0).abs() < 1e-4);
        let sq = SampledFunction::from_fn(0.0, 1e-2, 201, |t| t * t).unwrap();
        for (t0, side) in [(0.0, Side::Right), (1.0, Side::Central), (2.0, Side::Left), (0.7, Side::Right)] {
            let d2 = fit_derivative(&sq, t0, 2, side, 0.3, 4).unwrap();
            assert!((d2 - 2.0).abs() < 1e-9, "{t0} {side:?} {d2}");
        }
        assert!(matches!(fit_derivative(&sq, 0.0, 3, Side::Right, 0.3, 2), Err(IdentError::DegreeBelowOrder { .. })));
        assert!(matches!(
            fit_derivative(&sq, 0.0, 1, Side::Left, 0.3, 4),
            Err(IdentError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn ramp_fourth_derivative() {
        let p = params(&[("lambda", 1.0), ("a_tot", 2.0)]);
        let y = sampled_output("lambda-system", &p, &InputSignal::ramp(1.0).unwrap(), 1.0);
        let d4 = fit_derivative(&y, 0.0, 4, Side::Right, 0.2, 6).unwrap();
        assert!((d4 - 2.0).abs() < 0.04, "{d4}");
        assert!((estimate_lambda_from_ramp(&y).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn a_from_step() {
        for &(a, b, c) in &[(2.0, 3.0, 0.5), (1.0, 1.0, 1.0)] {
            let k = SampledFunction::from_fn(0.0, 1e-3, 1001, |t| c * b / a * (1.0 - (-a * t).exp())).unwrap();
            let est = estimate_a_from_step(&k).unwrap();
            assert!((est - a).abs() / a < 1e-3, "{est}");
        }
        let zero = SampledFunction::from_fn(0.0, 1e-3, 1001, |_| 0.0).unwrap();
        assert!(matches!(estimate_a_from_step(&zero), Err(IdentError::ZeroSlope(_))));
    }

    #[test]
    fn lambda_from_pulse() {
        for lambda in [0.5, 1.0, 2.0] {
            let p = params(&[("lambda", lambda), ("a_tot", 2.0)]);
            let y = sampled_output("lambda-system", &p, &InputSignal::pulse(1.0, 0.0, 1.0).unwrap(), 2.0);
            let slope = pulse_end_slope(&y, 1.0).unwrap();
            assert!((slope - ((-lambda).exp() - 1.0)).abs() < 1e-4);
            assert!((estimate_lambda_from_pulse(&y, 1.0).unwrap() - lambda).abs() < 1e-3);
            assert!(matches!(estimate_lambda_from_pulse(&y, 0.5), Err(IdentError::UnsupportedPulseEnd(_))));
        }
        assert!(matches!(lambda_from_pulse_slope(-1.1), Err(IdentError::PulseDomain(_))));
    }

    #[test]
    fn gray_box_intervals() {
        let b = propagate_gray_box(Interval::point(1.0), Interval::new(0.01, 0.1).unwrap()).unwrap();
        assert_eq!((b.lo, b.hi), (10.0, 100.0));
        let b = propagate_gray_box(Interval::point(1.5), Interval::point(0.5)).unwrap();
        assert_eq!(b, Interval::point(3.0));
        assert!(matches!(
            propagate_gray_box(Interval::point(1.0), Interval::new(-0.1, 0.1).unwrap()),
            Err(IdentError::IntervalContainsZero(..))
        ));
        let neg = Interval::new(-2.0, 1.0).unwrap().div(&Interval::new(-4.0, -1.0).unwrap()).unwrap();
        assert_eq!((neg.lo, neg.hi), (-1.0, 2.0));
        assert_eq!("0.01,0.1".parse::<Interval>().unwrap(), Interval::new(0.01, 0.1).unwrap());
        assert_eq!("[2, 3]".parse::<Interval>().unwrap().to_string(), "[2, 3]");
        assert!(Interval::new(2.0, 1.0).is_err());
    }
}
