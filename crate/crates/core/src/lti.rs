//! Linear time-invariant analysis: impulse and step responses, convolution,
//! gains, Markov parameters, realization minimality, input/output
//! equivalence with similarity certificates, frequency response and
//! impulse-response deconvolution.
//!
//! Responses are obtained by integrating the state equation with the same
//! RK4 code path used for general systems; no matrix exponentials.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::signals::InputSignal;
use crate::sim::{integrate_dynamics, time_grid, Dynamics, SimError, SolverConfig};
use crate::systems::LinearSystem;
use crate::expr::ExprError;

/// Relative singular-value threshold for reachability/observability ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Relative tolerance on Markov parameters for equivalence checks.
pub const DEFAULT_EQUIV_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-13;
/// Relative residual allowed when verifying a similarity certificate.
pub const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtiError {
    #[error("response requested at negative time {0}")]
    NegativeTime(f64),
    #[error("sampled grids do not match: {0}")]
    GridMismatch(String),
    #[error("invalid sampled function: {0}")]
    InvalidSamples(String),
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error("system {0} is not minimal (reachability and observability required)")]
    NotMinimal(usize),
    #[error("systems are not input/output equivalent")]
    NotEquivalent,
    #[error("similarity certificate failed verification (residual {0:e})")]
    CertificateFailed(f64),
    #[error("input vanishes identically; the convolution cannot be inverted")]
    ZeroInput,
    #[error("triangular deconvolution is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("symmetry scale must be nonzero")]
    ZeroScale,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Samples `values[i] = f(t0 + i h)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    t0: f64,
    h: f64,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(t0: f64, h: f64, values: Vec<f64>) -> Result<Self, LtiError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(LtiError::InvalidSamples(format!("grid step {h} must be positive")));
        }
        if !t0.is_finite() {
            return Err(LtiError::InvalidSamples("start time must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LtiError::InvalidSamples(format!("sample {i} is not finite")));
        }
        Ok(Self { t0, h, values })
    }

    pub fn from_fn(t0: f64, h: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self, LtiError> {
        Self::new(t0, h, (0..len).map(|i| f(t0 + i as f64 * h)).collect())
    }

    /// Samples a signal on `[0, (len-1) h]`.
    pub fn from_signal(signal: &InputSignal, h: f64, len: usize) -> Result<Self, LtiError> {
        Self::from_fn(0.0, h, len, |t| signal.eval(t))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.time(i))
    }

    /// Builds a sampled function from explicit times, which must form a
    /// uniform grid to within `1e-9 h`.
    pub fn from_samples(times: &[f64], values: Vec<f64>) -> Result<Self, LtiError> {
        if times.len() != values.len() {
            return Err(LtiError::InvalidSamples(format!("{} times but {} values", times.len(), values.len())));
        }
        if times.len() < 2 {
            return Err(LtiError::InvalidSamples("need at least two samples".into()));
        }
        let t0 = times[0];
        let h = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
        if !(h > 0.0) {
            return Err(LtiError::InvalidSamples("times must be increasing".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if (t - (t0 + i as f64 * h)).abs() > 1e-9 * h {
                return Err(LtiError::InvalidSamples(format!("time {t} at row {i} is off the uniform grid (h = {h})")));
            }
        }
        Self::new(t0, h, values)
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LtiError> {
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return Err(LtiError::GridMismatch(format!("steps {} and {}", self.h, other.h)));
        }
        if self.t0.abs() > 1e-12 || other.t0.abs() > 1e-12 {
            return Err(LtiError::GridMismatch("both grids must start at t = 0".into()));
        }
        if self.len() != other.len() {
            return Err(LtiError::GridMismatch(format!("lengths {} and {}", self.len(), other.len())));
        }
        Ok(())
    }
}

struct FreeResponse<'a> {
    sys: &'a LinearSystem,
    with_quadrature: bool,
}

impl Dynamics for FreeResponse<'_> {
    fn dim(&self) -> usize {
        self.sys.dim() + usize::from(self.with_quadrature)
    }

    fn deriv(&self, _t: f64, x: &[f64], _u: f64, dx: &mut [f64]) -> Result<(), ExprError> {
        let n = self.sys.dim();
        let a = self.sys.a();
        for i in 0..n {
            dx[i] = (0..n).map(|j| a[(i, j)] * x[j]).sum();
        }
        if self.with_quadrature {
            dx[n] = (0..n).map(|j| self.sys.c()[j] * x[j]).sum();
        }
        Ok(())
    }
}

/// Integrates `dx/dt = A x` from `x(0) = b` and returns `(c x(t), int_0^t c x)` on `grid`.
fn free_response(sys: &LinearSystem, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LtiError> {
    let n = sys.dim();
    let dynamics = FreeResponse { sys, with_quadrature: true };
    let mut x0: Vec<f64> = sys.b().iter().copied().collect();
    x0.push(0.0);
    let states = integrate_dynamics(&dynamics, &x0, &InputSignal::Zero, grid)?;
    let impulse = states.iter().map(|x| (0..n).map(|j| sys.c()[j] * x[j]).sum()).collect();
    let step = states.iter().map(|x| x[n]).collect();
    Ok((impulse, step))
}

fn single_point_grid(t: f64, cfg: &SolverConfig) -> Result<Vec<f64>, LtiError> {
    let h = cfg.h.min(t);
    Ok(time_grid(0.0, t, h, &[], &[])?)
}

/// Impulse response `k(t) = c e^{At} b`.
pub fn impulse_response(sys: &LinearSystem, t: f64) -> Result<f64, LtiError> {
    impulse_response_with(sys, t, &SolverConfig::default())
}

pub fn impulse_response_with(sys: &LinearSystem, t: f64, cfg: &SolverConfig) -> Result<f64, LtiError> {
    if !(t >= 0.0) {
        return Err(LtiError::NegativeTime(t));
    }
    if sys.dim() == 1 {
        return Ok(sys.c()[0] * sys.b()[0] * (sys.a()[(0, 0)] * t).exp());
    }
    if t == 0.0 {
        return Ok(sys.c().dot(sys.b()));
    }
    let (k, _) = free_response(sys, &single_point_grid(t, cfg)?)?;
    Ok(*k.last().expect("grid is non-empty"))
}

/// Step response `K(t) = int_0^t k`.
pub fn step_response(sys: &LinearSystem, t: f64) -> Result<f64, LtiError> {
    step_response_with(sys, t, &SolverConfig::default())
}

pub fn step_response_with(sys: &LinearSystem, t: f64, cfg: &SolverConfig) -> Result<f64, LtiError> {
    if !(t >= 0.0) {
        return Err(LtiError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let (_, big_k) = free_response(sys, &single_point_grid(t, cfg)?)?;
    Ok(*big_k.last().expect("grid is non-empty"))
}

/// Impulse and step responses sampled at `0, h, ..., (len-1) h` from one integration.
pub fn sampled_responses(sys: &LinearSystem, h: f64, len: usize) -> Result<(SampledFunction, SampledFunction), LtiError> {
    if len < 2 {
        return Err(LtiError::InvalidSamples("need at least two samples".into()));
    }
    let grid: Vec<f64> = (0..len).map(|i| i as f64 * h).collect();
    let (k, big_k) = free_response(sys, &grid)?;
    Ok((SampledFunction::new(0.0, h, k)?, SampledFunction::new(0.0, h, big_k)?))
}

/// Trapezoid-rule discrete convolution `y(t_n) = int_0^{t_n} k(t_n - r) u(r) dr`.
pub fn convolve(k: &SampledFunction, u: &SampledFunction) -> Result<SampledFunction, LtiError> {
    k.check_compatible(u)?;
    let (kv, uv, h) = (k.values(), u.values(), k.h());
    let y = (0..kv.len())
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            let interior: f64 = (1..n).map(|j| kv[n - j] * uv[j]).sum();
            h * (0.5 * kv[n] * uv[0] + interior + 0.5 * kv[0] * uv[n])
        })
        .collect();
    SampledFunction::new(0.0, h, y)
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max == 0.0 || min <= SINGULAR_TOL * max
}

/// Steady-state gain `-c A^{-1} b`.
pub fn steady_state_gain(sys: &LinearSystem) -> Result<f64, LtiError> {
    let a = sys.a();
    if is_singular(a) {
        return Err(LtiError::Singular("A"));
    }
    if a.complex_eigenvalues().iter().any(|l| l.re >= 0.0) {
        log::warn!("A is not Hurwitz; the steady-state gain is not an attainable limit");
    }
    let x = a.clone().lu().solve(sys.b()).ok_or(LtiError::Singular("A"))?;
    Ok(-sys.c().dot(&x))
}

/// `[c b, c A b, ..., c A^{m-1} b]`.
pub fn markov_parameters(sys: &LinearSystem, m: usize) -> Vec<f64> {
    let mut v = sys.b().clone();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        out.push(sys.c().dot(&v));
        if i + 1 < m {
            v = sys.a() * v;
        }
    }
    out
}

pub fn reachability_matrix(sys: &LinearSystem) -> DMatrix<f64> {
    let n = sys.dim();
    let mut r = DMatrix::zeros(n, n);
    let mut v = sys.b().clone();
    for j in 0..n {
        r.set_column(j, &v);
        v = sys.a() * v;
    }
    r
}

pub fn observability_matrix(sys: &LinearSystem) -> DMatrix<f64> {
    let n = sys.dim();
    let mut o = DMatrix::zeros(n, n);
    let mut row = sys.c().transpose();
    for i in 0..n {
        o.set_row(i, &row);
        row = row * sys.a();
    }
    o
}

fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Minimality {
    pub reach_rank: usize,
    pub obs_rank: usize,
    pub minimal: bool,
}

pub fn minimality(sys: &LinearSystem, tol: f64) -> Minimality {
    let reach_rank = numerical_rank(&reachability_matrix(sys), tol);
    let obs_rank = numerical_rank(&observability_matrix(sys), tol);
    Minimality { reach_rank, obs_rank, minimal: reach_rank == sys.dim() && obs_rank == sys.dim() }
}

/// Whether two minimal systems produce identical outputs for every input,
/// decided on the first `2 max(n1, n2)` Markov parameters.
pub fn io_equivalent(s1: &LinearSystem, s2: &LinearSystem, tol: f64) -> Result<bool, LtiError> {
    if !minimality(s1, DEFAULT_RANK_TOL).minimal {
        return Err(LtiError::NotMinimal(1));
    }
    if !minimality(s2, DEFAULT_RANK_TOL).minimal {
        return Err(LtiError::NotMinimal(2));
    }
    let m = 2 * s1.dim().max(s2.dim());
    let (m1, m2) = (markov_parameters(s1, m), markov_parameters(s2, m));
    let scale = m1.iter().chain(&m2).fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(m1.iter().zip(&m2).all(|(a, b)| (a - b).abs() <= tol * scale))
}

/// Similarity `T` with `(T A1 T^{-1}, T b1, c1 T^{-1}) = (A2, b2, c2)`.
pub fn find_similarity(s1: &LinearSystem, s2: &LinearSystem, tol: f64) -> Result<DMatrix<f64>, LtiError> {
    if !io_equivalent(s1, s2, tol)? || s1.dim() != s2.dim() {
        return Err(LtiError::NotEquivalent);
    }
    let (r1, r2) = (reachability_matrix(s1), reachability_matrix(s2));
    if is_singular(&r1) {
        return Err(LtiError::Singular("reachability matrix"));
    }
    // T R1 = R2  <=>  R1^T T^T = R2^T
    let t = r1
        .transpose()
        .lu()
        .solve(&r2.transpose())
        .ok_or(LtiError::Singular("reachability matrix"))?
        .transpose();
    let t_inv = t.clone().try_inverse().ok_or(LtiError::Singular("similarity"))?;
    let a_err = (&t * s1.a() * &t_inv - s2.a()).norm();
    let b_err = (&t * s1.b() - s2.b()).norm();
    let c_err = (s1.c().transpose() * &t_inv - s2.c().transpose()).norm();
    let residual = a_err + b_err + c_err;
    let scale = 1.0 + s2.a().norm() + s2.b().norm() + s2.c().norm();
    if residual > CERTIFICATE_TOL * scale {
        return Err(LtiError::CertificateFailed(residual));
    }
    Ok(t)
}

/// `W(s) = c (sI - A)^{-1} b`.
pub fn frequency_response(sys: &LinearSystem, s: Complex64) -> Result<Complex64, LtiError> {
    let n = sys.dim();
    let a = sys.a().map(|v| Complex64::new(v, 0.0));
    let resolvent = DMatrix::<Complex64>::identity(n, n) * s - a;
    let sv = resolvent.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    if max == 0.0 || min <= SINGULAR_TOL * max.max(1.0) {
        return Err(LtiError::Singular("resolvent sI - A"));
    }
    let b = sys.b().map(|v| Complex64::new(v, 0.0));
    let x = resolvent.lu().solve(&b).ok_or(LtiError::Singular("resolvent sI - A"))?;
    Ok(sys.c().iter().zip(x.iter()).map(|(c, x)| *c * *x).sum())
}

/// Coefficient of `k_m` in row `n` of the trapezoid convolution system.
fn conv_coeff(u: &[f64], h: f64, n: usize, m: usize) -> f64 {
    let w = if m == n || m == 0 { 0.5 } else { 1.0 };
    h * w * u[n - m]
}

/// Default ridge weight: `1e-8 * trace(M^T M) / m` for the convolution matrix `M`.
pub fn default_ridge(u: &SampledFunction) -> f64 {
    let (uv, h, len) = (u.values(), u.h(), u.len());
    let mut trace = 0.0;
    for n in 1..len {
        for m in 0..=n {
            trace += conv_coeff(uv, h, n, m).powi(2);
        }
    }
    1e-8 * trace / len as f64
}

/// Recovers the impulse response `k` from an output `y` and input `u`.
///
/// Rows `1..len` of the trapezoid convolution system are solved in least
/// squares with penalty `ridge * |k|^2`. The first row carries no
/// information, so the unregularized problem has a one-dimensional family
/// of exact solutions; with `ridge = 0` the minimum-norm member is returned
/// (this needs `u(0) != 0`). A positive ridge assembles the normal
/// equations in `O(len^2)` and factors them densely in `O(len^3)`.
pub fn deconvolve_impulse(y: &SampledFunction, u: &SampledFunction, ridge: f64) -> Result<SampledFunction, LtiError> {
    y.check_compatible(u)?;
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(LtiError::InvalidSamples(format!("ridge {ridge} must be finite and >= 0")));
    }
    let (uv, yv, h) = (u.values(), y.values(), u.h());
    let u_max = uv.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if u_max == 0.0 {
        return Err(LtiError::ZeroInput);
    }
    let k = if ridge == 0.0 {
        deconvolve_triangular(yv, uv, h, u_max)?
    } else {
        deconvolve_ridge(yv, uv, h, ridge)?
    };
    SampledFunction::new(0.0, h, k).map_err(|_| LtiError::IllConditioned("solution is not finite".into()))
}

fn deconvolve_triangular(y: &[f64], u: &[f64], h: f64, u_max: f64) -> Result<Vec<f64>, LtiError> {
    let len = y.len();
    if u[0].abs() <= 1e-12 * u_max {
        return Err(LtiError::IllConditioned("u(0) = 0 makes the triangular system singular; use a ridge".into()));
    }
    let diag = conv_coeff(u, h, 1, 1);
    // k = p + k0 q, with p solving the rows for k0 = 0 and q the homogeneous part
    let mut p = vec![0.0; len];
    let mut q = vec![0.0; len];
    q[0] = 1.0;
    for n in 1..len {
        let mut acc_p = 0.0;
        let mut acc_q = conv_coeff(u, h, n, 0);
        for m in 1..n {
            let coeff = conv_coeff(u, h, n, m);
            acc_p += coeff * p[m];
            acc_q += coeff * q[m];
        }
        p[n] = (y[n] - acc_p) / diag;
        q[n] = -acc_q / diag;
    }
    let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
    let qq: f64 = q.iter().map(|v| v * v).sum();
    if !(pq.is_finite() && qq.is_finite()) {
        return Err(LtiError::IllConditioned("forward substitution overflowed".into()));
    }
    let k0 = -pq / qq;
    Ok(p.iter().zip(&q).map(|(a, b)| a + k0 * b).collect())
}

/// `M^T M` for the trapezoid convolution matrix (rows `1..len`) in `O(len^2)`.
///
/// `M = P + D` with `P[n][m] = h u[n-m]` Toeplitz and `D` the two half-weight
/// corrections per row (column `n` and column 0). `P^T P` obeys the shift
/// recurrence `S[i][j] = S[i-1][j-1] - u[N-i] u[N-j]` once `max(i, j) >= 2`.
fn convolution_normal_matrix(u: &[f64], h: f64) -> faer::Mat<f64> {
    let n_len = u.len();
    let mut g = faer::Mat::<f64>::zeros(n_len, n_len);
    for i in 0..n_len.min(2) {
        for j in 0..n_len {
            let lo = i.max(j).max(1);
            g[(i, j)] = (lo..n_len).map(|n| u[n - i] * u[n - j]).sum();
        }
    }
    for i in 2..n_len {
        g[(i, 0)] = g[(0, i)];
        for j in 1..n_len {
            g[(i, j)] = g[(i - 1, j - 1)] - u[n_len - i] * u[n_len - j];
        }
    }
    let h2 = h * h;
    // P^T D, column 0 then columns j >= 1
    let mut x0 = vec![0.0; n_len];
    for (i, x) in x0.iter_mut().enumerate() {
        *x = -0.5 * (i.max(1)..n_len).map(|n| u[n - i] * u[n]).sum::<f64>();
    }
    for i in 0..n_len {
        for j in 0..n_len {
            let mut v = g[(i, j)];
            // X[i][j] + X[j][i] with X = P^T D / h^2
            let x_ij = if j == 0 { x0[i] } else if i <= j { -0.5 * u[0] * u[j - i] } else { 0.0 };
            let x_ji = if i == 0 { x0[j] } else if j <= i { -0.5 * u[0] * u[i - j] } else { 0.0 };
            v += x_ij + x_ji;
            // D^T D / h^2
            v += match (i, j) {
                (0, 0) => 0.25 * u[1..].iter().map(|w| w * w).sum::<f64>(),
                (0, k) | (k, 0) => 0.25 * u[0] * u[k],
                (a, b) if a == b => 0.25 * u[0] * u[0],
                _ => 0.0,
            };
            g[(i, j)] = h2 * v;
        }
    }
    g
}

fn deconvolve_ridge(y: &[f64], u: &[f64], h: f64, ridge: f64) -> Result<Vec<f64>, LtiError> {
    use faer::linalg::solvers::Solve;
    let len = y.len();
    let mut normal = convolution_normal_matrix(u, h);
    for i in 0..len {
        normal[(i, i)] += ridge;
    }
    let b = faer::Col::<f64>::from_fn(len, |m| (m.max(1)..len).map(|n| conv_coeff(u, h, n, m) * y[n]).sum());
    let llt = normal
        .llt(faer::Side::Lower)
        .map_err(|_| LtiError::IllConditioned("regularized normal matrix is not positive definite".into()))?;
    let k = llt.solve(&b);
    Ok((0..len).map(|i| k[i]).collect())
}

/// Scaling symmetry `(a, b, c) -> (a, T b, c / T)` of the scalar triple.
pub fn symmetry_orbit(a: f64, b: f64, c: f64, scale: f64) -> Result<(f64, f64, f64), LtiError> {
    if scale == 0.0 || !scale.is_finite() {
        return Err(LtiError::ZeroScale);
    }
    Ok((a, scale * b, c / scale))
}
