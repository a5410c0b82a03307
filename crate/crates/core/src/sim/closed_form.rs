//! Analytic solutions of registry models, used as oracles for the integrator.

use crate::expr::Env;
use crate::signals::InputSignal;
use crate::systems::{get_registry_model, ParamMap, SystemError};

use super::SimError;

fn param(params: &ParamMap, name: &str) -> Result<f64, SimError> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| SimError::System(SystemError::UnboundParameter(name.to_string())))
}

/// `(1 - e^{-k t}) / k` for `t >= 0`, zero before.
fn rise(k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if k == 0.0 {
        t
    } else {
        -(-k * t).exp_m1() / k
    }
}

/// Response of `dw/dt = -k w + 1_{[t_on, t_off)}` from rest.
fn pulse_response(k: f64, t_on: f64, t_off: f64, t: f64) -> f64 {
    if t < t_on {
        0.0
    } else if t < t_off {
        rise(k, t - t_on)
    } else {
        rise(k, t_off - t_on) * (-k * (t - t_off)).exp()
    }
}

/// Response of `dw/dt = -k w + t` from rest.
fn ramp_response(k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t / k - rise(k, t) / k
}

/// Response of `dw/dt = -k w + t^2` from rest.
fn ramp_squared_response(k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t * t / k - 2.0 * t / (k * k) + 2.0 * rise(k, t) / (k * k)
}

fn no_closed_form(model: &str, signal: &InputSignal) -> SimError {
    SimError::NoClosedForm { model: model.to_string(), signal: signal.to_string() }
}

/// Analytic state vector of a registry model at time `t`.
pub fn closed_form_state(model: &str, params: &ParamMap, signal: &InputSignal, t: f64) -> Result<Vec<f64>, SimError> {
    let none = || no_closed_form(model, signal);
    if t < 0.0 {
        let entry = get_registry_model(model)?;
        return Ok(vec![0.0; entry.system.n_states()]);
    }
    match model {
        "scalar-lti" => {
            let (a, b) = (param(params, "a")?, param(params, "b")?);
            let x = match *signal {
                InputSignal::Zero => 0.0,
                InputSignal::Step { u0 } => b * u0 * rise(a, t),
                InputSignal::Pulse { u0, t_on, t_off } => b * u0 * pulse_response(a, t_on, t_off, t),
                InputSignal::ImpulseApprox { area, width } => b * area / width * pulse_response(a, 0.0, width, t),
                InputSignal::Ramp { slope } => b * slope * ramp_response(a, t),
                InputSignal::PiecewiseLinear { .. } => return Err(none()),
            };
            Ok(vec![x])
        }
        "lambda-system" => {
            let lambda = param(params, "lambda")?;
            // x is driven by u^2 and z by u through the same first-order filter
            let (x, z) = match *signal {
                InputSignal::Zero => (0.0, 0.0),
                InputSignal::Step { u0 } => {
                    let w = rise(lambda, t);
                    (u0 * u0 * w, u0 * w)
                }
                InputSignal::Pulse { u0, t_on, t_off } => {
                    let w = pulse_response(lambda, t_on, t_off, t);
                    (u0 * u0 * w, u0 * w)
                }
                InputSignal::ImpulseApprox { area, width } => {
                    let height = area / width;
                    let w = pulse_response(lambda, 0.0, width, t);
                    (height * height * w, height * w)
                }
                InputSignal::Ramp { slope } => {
                    (slope * slope * ramp_squared_response(lambda, t), slope * ramp_response(lambda, t))
                }
                InputSignal::PiecewiseLinear { .. } => return Err(none()),
            };
            Ok(vec![x, z])
        }
        "lambda-system-split" => {
            let (lx, lz) = (param(params, "lambda_x")?, param(params, "lambda_z")?);
            match *signal {
                InputSignal::Zero => Ok(vec![0.0, 0.0]),
                InputSignal::Step { u0 } => Ok(vec![u0 * u0 * rise(lx, t), u0 * rise(lz, t)]),
                _ => Err(none()),
            }
        }
        "fast-reporter-linear" => {
            let (a, b, c, eps) = (param(params, "a")?, param(params, "b")?, param(params, "c")?, param(params, "eps")?);
            match *signal {
                InputSignal::Zero => Ok(vec![0.0, 0.0]),
                InputSignal::Step { u0 } => {
                    let mu = 1.0 / eps;
                    if (mu - a).abs() <= 1e-12 * mu || a == 0.0 {
                        return Err(none());
                    }
                    let gain = c * b * u0 / a;
                    let x = b * u0 * rise(a, t);
                    let y = gain * (1.0 - (mu * (-a * t).exp() - a * (-mu * t).exp()) / (mu - a));
                    Ok(vec![x, y])
                }
                _ => Err(none()),
            }
        }
        "fast-reporter-nonlinear" => {
            let (lambda, a_tot, eps) = (param(params, "lambda")?, param(params, "a_tot")?, param(params, "eps")?);
            match *signal {
                InputSignal::Zero => Ok(vec![0.0, 0.0, 0.0]),
                InputSignal::Step { u0 } => {
                    let w = rise(lambda, t);
                    // x = u0 z makes the reporter drive constant at a_tot u0
                    let y = a_tot * u0 * -(-t / eps).exp_m1();
                    Ok(vec![u0 * u0 * w, u0 * w, y])
                }
                _ => Err(none()),
            }
        }
        _ => Err(SimError::System(SystemError::UnknownModel(model.to_string()))),
    }
}

/// Analytic output of a registry model at time `t`; `t` may be `+inf` for
/// stable models.
pub fn closed_form_output(model: &str, params: &ParamMap, signal: &InputSignal, t: f64) -> Result<f64, SimError> {
    let entry = get_registry_model(model)?;
    let x = closed_form_state(model, params, signal, t)?;
    let theta = entry.system.param_vector(params)?;
    let u = signal.eval(t);
    Ok(entry.system.output().eval(&Env { states: &x, params: &theta, input: u, time: t })?)
}

/// Analytic `order`-th time derivative of the output, for the pairs where
/// it is available: scalar-lti under a step and lambda-system under a ramp.
/// At `t = 0` the right limit is returned.
pub fn closed_form_output_derivative(
    model: &str,
    params: &ParamMap,
    signal: &InputSignal,
    t: f64,
    order: u32,
) -> Result<f64, SimError> {
    if order == 0 {
        return closed_form_output(model, params, signal, t);
    }
    let t = t.max(0.0);
    match (model, signal) {
        ("scalar-lti", InputSignal::Step { u0 }) => {
            let (a, b, c) = (param(params, "a")?, param(params, "b")?, param(params, "c")?);
            // y = c b u0 (1 - e^{-at}) / a, so y^(n) = -c b u0 (-a)^n e^{-at} / a
            Ok(c * b * u0 * (-a).powi(order as i32 - 1) * (-a * t).exp())
        }
        ("lambda-system", InputSignal::Ramp { slope }) => {
            let (lambda, a_tot) = (param(params, "lambda")?, param(params, "a_tot")?);
            let l = lambda;
            // y = s^2 q(t) + a_tot s t with
            // q = -t/l^2 + 2/l^3 + e^{-l t} (alpha + beta t)
            let (alpha, beta) = (-2.0 / l.powi(3), -1.0 / (l * l));
            let n = order as i32;
            let decay = (-l * t).exp();
            let exp_part =
                decay * ((-l).powi(n) * (alpha + beta * t) + f64::from(order) * (-l).powi(n - 1) * beta);
            let poly_part = if order == 1 { -1.0 / (l * l) } else { 0.0 };
            let linear = if order == 1 { a_tot * slope } else { 0.0 };
            Ok(slope * slope * (poly_part + exp_part) + linear)
        }
        _ => Err(no_closed_form(model, signal)),
    }
}
