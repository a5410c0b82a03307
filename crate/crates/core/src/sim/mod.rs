//! Fixed-step classical Runge–Kutta integration with breakpoint splitting.
//!
//! The time grid is the union of a uniform `h` grid, the input signal's
//! breakpoints and any requested sample times, so no step straddles an
//! input discontinuity. Within a step the input is evaluated from the
//! inside of the step: right values at the start, left limits at the end.

mod closed_form;

use thiserror::Error;

use crate::expr::{Env, ExprError};
use crate::signals::InputSignal;
use crate::systems::{GeneralSystem, ParamMap, SystemError};

pub use closed_form::{closed_form_output, closed_form_output_derivative, closed_form_state};

/// Any state component above this magnitude is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("invalid time span [{t0}, {t1}]")]
    InvalidSpan { t0: f64, t1: f64 },
    #[error("step size {h} must be positive and no larger than the span")]
    InvalidStep { h: f64 },
    #[error("no closed form for model `{model}` under {signal} input")]
    NoClosedForm { model: String, signal: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Nominal step size.
    pub h: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { h: DEFAULT_STEP }
    }
}

impl SolverConfig {
    pub fn with_step(h: f64) -> Self {
        Self { h }
    }
}

/// Sampled solution of an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state_names: Vec<String>,
    pub times: Vec<f64>,
    pub inputs: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid point equal to `t` (within `tol`).
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    pub fn state_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[k]).collect()
    }
}

/// Right-hand side of a first-order system driven by a scalar input.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn deriv(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) -> Result<(), ExprError>;
}

/// Right-hand side of a [`GeneralSystem`] at fixed parameter values.
pub struct SystemDynamics<'a> {
    pub system: &'a GeneralSystem,
    pub params: &'a [f64],
}

impl Dynamics for SystemDynamics<'_> {
    fn dim(&self) -> usize {
        self.system.n_states()
    }

    fn deriv(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) -> Result<(), ExprError> {
        let env = Env { states: x, params: self.params, input: u, time: t };
        for (d, f) in dx.iter_mut().zip(self.system.rhs()) {
            *d = f.eval(&env)?;
        }
        Ok(())
    }
}

/// Builds the integration grid on `[t0, t1]`.
///
/// Points closer than `1e-9 h` are merged; breakpoints and extra points win
/// over uniform points when merged.
pub fn time_grid(t0: f64, t1: f64, h: f64, breakpoints: &[f64], extra: &[f64]) -> Result<Vec<f64>, SimError> {
    if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
        return Err(SimError::InvalidSpan { t0, t1 });
    }
    if !(h > 0.0) || h > (t1 - t0) * (1.0 + 1e-12) {
        return Err(SimError::InvalidStep { h });
    }
    let tol = 1e-9 * h;
    let mut points: Vec<(f64, bool)> = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * h;
        if t >= t1 - tol {
            break;
        }
        points.push((t, false));
        k += 1;
    }
    points.push((t1, true));
    for &b in breakpoints.iter().chain(extra) {
        if b > t0 + tol && b < t1 - tol {
            points.push((b, true));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut grid: Vec<(f64, bool)> = Vec::with_capacity(points.len());
    grid.push((t0, true));
    for p in points.into_iter().skip(1) {
        let last = grid.last_mut().expect("grid starts non-empty");
        if p.0 - last.0 < tol {
            if p.1 && !last.1 {
                *last = p;
            }
            continue;
        }
        grid.push(p);
    }
    Ok(grid.into_iter().map(|p| p.0).collect())
}

fn check_state(x: &[f64], t: f64) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(SimError::Divergence { t })
    }
}

/// Integrates `dynamics` from `x0` over `grid`, one RK4 step per interval.
pub fn integrate_dynamics<D: Dynamics + ?Sized>(
    dynamics: &D,
    x0: &[f64],
    signal: &InputSignal,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, SimError> {
    let n = dynamics.dim();
    debug_assert_eq!(x0.len(), n);
    let mut states = Vec::with_capacity(grid.len());
    let mut x = x0.to_vec();
    check_state(&x, grid[0])?;
    states.push(x.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for w in grid.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        let mid = t + 0.5 * h;
        let u_start = signal.eval(t);
        let u_mid = signal.eval(mid);
        let u_end = signal.eval_left(t_next);

        dynamics.deriv(t, &x, u_start, &mut k1)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        dynamics.deriv(mid, &tmp, u_mid, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        dynamics.deriv(mid, &tmp, u_mid, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        dynamics.deriv(t_next, &tmp, u_end, &mut k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_state(&x, t_next)?;
        states.push(x.clone());
    }
    Ok(states)
}

/// Simulates `system` under `signal` over `[t0, t1]`.
pub fn integrate(
    system: &GeneralSystem,
    params: &ParamMap,
    signal: &InputSignal,
    span: (f64, f64),
    cfg: &SolverConfig,
) -> Result<Trajectory, SimError> {
    integrate_with_samples(system, params, signal, span, cfg, &[])
}

/// Like [`integrate`], with `samples` inserted into the grid as exact points.
pub fn integrate_with_samples(
    system: &GeneralSystem,
    params: &ParamMap,
    signal: &InputSignal,
    span: (f64, f64),
    cfg: &SolverConfig,
    samples: &[f64],
) -> Result<Trajectory, SimError> {
    let theta = system.param_vector(params)?;
    integrate_vector(system, &theta, signal, span, cfg, samples)
}

pub(crate) fn integrate_vector(
    system: &GeneralSystem,
    theta: &[f64],
    signal: &InputSignal,
    span: (f64, f64),
    cfg: &SolverConfig,
    samples: &[f64],
) -> Result<Trajectory, SimError> {
    let grid = time_grid(span.0, span.1, cfg.h, &signal.breakpoints(), samples)?;
    let dynamics = SystemDynamics { system, params: theta };
    let states = integrate_dynamics(&dynamics, system.x0(), signal, &grid)?;
    let inputs: Vec<f64> = grid.iter().map(|&t| signal.eval(t)).collect();
    let outputs = grid
        .iter()
        .zip(&states)
        .zip(&inputs)
        .map(|((&t, x), &u)| system.output().eval(&Env { states: x, params: theta, input: u, time: t }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory { state_names: system.state_names().to_vec(), times: grid, inputs, states, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{get_registry_model, params, LinearSystem};

    #[test]
    fn grid_contains_breakpoints() {
        let grid = time_grid(0.0, 1.0, 0.3, &[0.45, 0.6, 2.0], &[0.9]).unwrap();
        // 3 * 0.3 rounds below 0.9; the exact sample point replaces it
        assert_eq!(grid, vec![0.0, 0.3, 0.45, 0.6, 0.9, 1.0]);
        let grid = time_grid(0.0, 1.0, 0.25, &[0.5], &[]).unwrap();
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(matches!(time_grid(1.0, 0.0, 0.1, &[], &[]), Err(SimError::InvalidSpan { .. })));
        assert!(matches!(time_grid(0.0, 1.0, 0.0, &[], &[]), Err(SimError::InvalidStep { .. })));
        assert!(matches!(time_grid(0.0, 1.0, 2.0, &[], &[]), Err(SimError::InvalidStep { .. })));
    }

    #[test]
    fn scalar_step_matches_closed_form() {
        let entry = get_registry_model("scalar-lti").unwrap();
        let traj = integrate(
            &entry.system,
            &entry.default_params,
            &InputSignal::step(1.0).unwrap(),
            (0.0, 5.0),
            &SolverConfig::default(),
        )
        .unwrap();
        let i = traj.index_of(1.0, 1e-12).unwrap();
        assert!((traj.outputs[i] - (1.0 - (-1.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn lambda_step_output_is_constant() {
        let entry = get_registry_model("lambda-system").unwrap();
        let traj = integrate(
            &entry.system,
            &params(&[("lambda", 1.0), ("a_tot", 2.0)]),
            &InputSignal::step(1.0).unwrap(),
            (0.0, 5.0),
            &SolverConfig::default(),
        )
        .unwrap();
        for (t, y) in traj.times.iter().zip(&traj.outputs) {
            if *t > 0.0 {
                assert!((y - 2.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_input_stays_at_rest() {
        for id in crate::systems::registry_ids() {
            let entry = get_registry_model(id).unwrap();
            let traj = integrate(&entry.system, &entry.default_params, &InputSignal::Zero, (0.0, 2.0), &SolverConfig::default())
                .unwrap();
            assert!(traj.outputs.iter().all(|y| *y == 0.0), "{id}");
            assert!(traj.states.iter().flatten().all(|x| *x == 0.0), "{id}");
        }
    }

    #[test]
    fn pulse_end_uses_left_limit() {
        // Integrating dx/dt = u across a pulse ending on a grid point.
        let sys = GeneralSystem::parse(&["x"], &[] as &[&str], &["u"], "x", None).unwrap();
        let traj = integrate(
            &sys,
            &ParamMap::new(),
            &InputSignal::pulse(1.0, 0.0, 1.0).unwrap(),
            (0.0, 2.0),
            &SolverConfig::with_step(0.25),
        )
        .unwrap();
        assert!((traj.outputs.last().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_detected() {
        let sys = GeneralSystem::parse(&["x"], &["k"], &["k*x + 1"], "x", None).unwrap();
        let err = integrate(&sys, &params(&[("k", 50.0)]), &InputSignal::Zero, (0.0, 10.0), &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, SimError::Divergence { .. }));
    }

    #[test]
    fn unbound_parameter() {
        let entry = get_registry_model("lambda-system").unwrap();
        let err = integrate(&entry.system, &params(&[("lambda", 1.0)]), &InputSignal::Zero, (0.0, 1.0), &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, SimError::System(SystemError::UnboundParameter(_))));
    }

    #[test]
    fn rk4_order() {
        let entry = get_registry_model("scalar-lti").unwrap();
        let p = params(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let step = InputSignal::step(1.0).unwrap();
        let max_err = |h: f64| {
            let traj = integrate(&entry.system, &p, &step, (0.0, 5.0), &SolverConfig::with_step(h)).unwrap();
            traj.times
                .iter()
                .zip(&traj.outputs)
                .map(|(&t, y)| (y - closed_form_output("scalar-lti", &p, &step, t).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = max_err(0.1) / max_err(0.05);
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn linear_embedding_matches_registry_model() {
        let lin = LinearSystem::scalar(2.0, 3.0, 0.5).unwrap();
        let entry = get_registry_model("scalar-lti").unwrap();
        let p = params(&[("a", 2.0), ("b", 3.0), ("c", 0.5)]);
        let sig = InputSignal::pulse(1.0, 0.2, 1.3).unwrap();
        let a = integrate(&lin.to_general(), &ParamMap::new(), &sig, (0.0, 3.0), &SolverConfig::default()).unwrap();
        let b = integrate(&entry.system, &p, &sig, (0.0, 3.0), &SolverConfig::default()).unwrap();
        for (ya, yb) in a.outputs.iter().zip(&b.outputs) {
            assert!((ya - yb).abs() < 1e-12);
        }
    }
}
