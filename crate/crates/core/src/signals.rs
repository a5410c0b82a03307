//! Input signal classes: steps, pulses, ramps, narrow impulses and
//! piecewise-linear profiles. Every signal is zero for negative time.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("invalid signal: {0}")]
    Invalid(String),
    #[error("cannot parse signal spec `{spec}`: {reason}")]
    Spec { spec: String, reason: String },
    #[error("no Laplace transform available for {0:?} signals")]
    UnsupportedLaplace(SignalClass),
    #[error("Laplace transform requires Re(s) > 0, got {0}")]
    LaplaceDomain(Complex64),
}

/// Discriminant of [`InputSignal`], used to key closed-form solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalClass {
    Zero,
    Step,
    Pulse,
    Ramp,
    Impulse,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    Step { u0: f64 },
    /// `u0` on the half-open interval `[t_on, t_off)`.
    Pulse { u0: f64, t_on: f64, t_off: f64 },
    Ramp { slope: f64 },
    /// Pulse of height `area / width` on `[0, width)`.
    ImpulseApprox { area: f64, width: f64 },
    /// Linear interpolation between knots, zero before the first knot and
    /// held at the last value afterwards.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl InputSignal {
    pub fn step(u0: f64) -> Result<Self, SignalError> {
        Self::Step { u0 }.validated()
    }

    pub fn pulse(u0: f64, t_on: f64, t_off: f64) -> Result<Self, SignalError> {
        Self::Pulse { u0, t_on, t_off }.validated()
    }

    pub fn ramp(slope: f64) -> Result<Self, SignalError> {
        Self::Ramp { slope }.validated()
    }

    pub fn impulse(area: f64, width: f64) -> Result<Self, SignalError> {
        Self::ImpulseApprox { area, width }.validated()
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self, SignalError> {
        Self::PiecewiseLinear { knots }.validated()
    }

    /// Checks the invariants of the variant.
    pub fn validate(&self) -> Result<(), SignalError> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(SignalError::Invalid(format!("{what} must be finite")))
            }
        };
        match self {
            InputSignal::Zero => Ok(()),
            InputSignal::Step { u0 } => finite(*u0, "u0"),
            InputSignal::Ramp { slope } => finite(*slope, "slope"),
            InputSignal::Pulse { u0, t_on, t_off } => {
                finite(*u0, "u0")?;
                finite(*t_on, "t_on")?;
                finite(*t_off, "t_off")?;
                if *t_on < 0.0 {
                    return Err(SignalError::Invalid("pulse must start at t >= 0".into()));
                }
                if t_on >= t_off {
                    return Err(SignalError::Invalid("pulse needs t_on < t_off".into()));
                }
                Ok(())
            }
            InputSignal::ImpulseApprox { area, width } => {
                finite(*area, "area")?;
                finite(*width, "width")?;
                if *width <= 0.0 {
                    return Err(SignalError::Invalid("impulse width must be positive".into()));
                }
                Ok(())
            }
            InputSignal::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(SignalError::Invalid("piecewise-linear signal needs knots".into()));
                }
                for &(t, v) in knots {
                    finite(t, "knot time")?;
                    finite(v, "knot value")?;
                }
                if knots[0].0 < 0.0 {
                    return Err(SignalError::Invalid("knot times must be >= 0".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(SignalError::Invalid("knot times must be strictly increasing".into()));
                }
                Ok(())
            }
        }
    }

    fn validated(self) -> Result<Self, SignalError> {
        self.validate()?;
        Ok(self)
    }

    pub fn class(&self) -> SignalClass {
        match self {
            InputSignal::Zero => SignalClass::Zero,
            InputSignal::Step { .. } => SignalClass::Step,
            InputSignal::Pulse { .. } => SignalClass::Pulse,
            InputSignal::Ramp { .. } => SignalClass::Ramp,
            InputSignal::ImpulseApprox { .. } => SignalClass::Impulse,
            InputSignal::PiecewiseLinear { .. } => SignalClass::PiecewiseLinear,
        }
    }

    /// Value at `t` (right-continuous at breakpoints).
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Step { u0 } => {
                if t >= 0.0 {
                    *u0
                } else {
                    0.0
                }
            }
            InputSignal::Pulse { u0, t_on, t_off } => {
                if t >= *t_on && t < *t_off {
                    *u0
                } else {
                    0.0
                }
            }
            InputSignal::Ramp { slope } => {
                if t >= 0.0 {
                    slope * t
                } else {
                    0.0
                }
            }
            InputSignal::ImpulseApprox { area, width } => {
                if t >= 0.0 && t < *width {
                    area / width
                } else {
                    0.0
                }
            }
            InputSignal::PiecewiseLinear { knots } => {
                if t < knots[0].0 {
                    0.0
                } else {
                    interpolate(knots, t)
                }
            }
        }
    }

    /// Left limit at `t`. Equal to [`eval`](Self::eval) away from breakpoints.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Step { u0 } => {
                if t > 0.0 {
                    *u0
                } else {
                    0.0
                }
            }
            InputSignal::Pulse { u0, t_on, t_off } => {
                if t > *t_on && t <= *t_off {
                    *u0
                } else {
                    0.0
                }
            }
            InputSignal::Ramp { slope } => {
                if t > 0.0 {
                    slope * t
                } else {
                    0.0
                }
            }
            InputSignal::ImpulseApprox { area, width } => {
                if t > 0.0 && t <= *width {
                    area / width
                } else {
                    0.0
                }
            }
            InputSignal::PiecewiseLinear { knots } => {
                if t <= knots[0].0 {
                    0.0
                } else {
                    interpolate(knots, t)
                }
            }
        }
    }

    /// Times at which the signal or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            InputSignal::Zero => vec![],
            InputSignal::Step { .. } | InputSignal::Ramp { .. } => vec![0.0],
            InputSignal::Pulse { t_on, t_off, .. } => vec![*t_on, *t_off],
            InputSignal::ImpulseApprox { width, .. } => vec![0.0, *width],
            InputSignal::PiecewiseLinear { knots } => knots.iter().map(|k| k.0).collect(),
        }
    }

    /// Laplace transform at complex frequency `s` with positive real part.
    pub fn laplace(&self, s: Complex64) -> Result<Complex64, SignalError> {
        if s.re <= 0.0 {
            return Err(SignalError::LaplaceDomain(s));
        }
        match self {
            InputSignal::Step { u0 } => Ok(*u0 / s),
            InputSignal::Ramp { slope } => Ok(*slope / (s * s)),
            InputSignal::Pulse { u0, t_on, t_off } => Ok(*u0 * ((-s * *t_on).exp() - (-s * *t_off).exp()) / s),
            other => Err(SignalError::UnsupportedLaplace(other.class())),
        }
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if t >= last.0 {
        return last.1;
    }
    // first knot with time > t; t >= knots[0].0 here so idx >= 1
    let idx = knots.partition_point(|k| k.0 <= t);
    let (t0, v0) = knots[idx - 1];
    let (t1, v1) = knots[idx];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

impl fmt::Display for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Zero => write!(f, "zero"),
            InputSignal::Step { u0 } => write!(f, "step:{u0:?}"),
            InputSignal::Pulse { u0, t_on, t_off } => write!(f, "pulse:{u0:?},{t_on:?},{t_off:?}"),
            InputSignal::Ramp { slope } => write!(f, "ramp:{slope:?}"),
            InputSignal::ImpulseApprox { area, width } => write!(f, "impulse:{area:?},{width:?}"),
            InputSignal::PiecewiseLinear { knots } => {
                write!(f, "pwl:")?;
                for (i, (t, v)) in knots.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{t:?},{v:?}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InputSignal {
    type Err = SignalError;

    /// Parses `zero`, `step:<u0>`, `pulse:<u0>,<t_on>,<t_off>`, `ramp:<slope>`,
    /// `impulse:<area>,<width>` or `pwl:<t0>,<v0>;<t1>,<v1>;...`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| SignalError::Spec { spec: spec.to_string(), reason: reason.to_string() };
        let spec_trim = spec.trim();
        if spec_trim == "zero" {
            return Ok(InputSignal::Zero);
        }
        let (kind, args) = spec_trim.split_once(':').ok_or_else(|| fail("expected `<kind>:<args>`"))?;
        let numbers = |s: &str| -> Result<Vec<f64>, SignalError> {
            s.split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| fail(&format!("`{p}` is not a number"))))
                .collect()
        };
        let exactly = |s: &str, n: usize| -> Result<Vec<f64>, SignalError> {
            let v = numbers(s)?;
            if v.len() != n {
                return Err(fail(&format!("expected {n} value(s), got {}", v.len())));
            }
            Ok(v)
        };
        let signal = match kind.trim() {
            "step" => InputSignal::step(exactly(args, 1)?[0]),
            "ramp" => InputSignal::ramp(exactly(args, 1)?[0]),
            "pulse" => {
                let v = exactly(args, 3)?;
                InputSignal::pulse(v[0], v[1], v[2])
            }
            "impulse" => {
                let v = exactly(args, 2)?;
                InputSignal::impulse(v[0], v[1])
            }
            "pwl" => {
                let knots = args
                    .split(';')
                    .map(|k| exactly(k, 2).map(|v| (v[0], v[1])))
                    .collect::<Result<Vec<_>, _>>()?;
                InputSignal::piecewise_linear(knots)
            }
            other => return Err(fail(&format!("unknown signal kind `{other}`"))),
        };
        signal.map_err(|e| fail(&e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_pulse_values() {
        let p = InputSignal::pulse(1.0, 0.0, 1.0).unwrap();
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(1.5), 0.0);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval_left(1.0), 1.0);
        assert_eq!(p.eval(-0.1), 0.0);
    }

    #[test]
    fn ramp_and_impulse_values() {
        assert_eq!(InputSignal::ramp(1.0).unwrap().eval(2.0), 2.0);
        assert_eq!(InputSignal::ramp(1.0).unwrap().eval(-2.0), 0.0);
        assert_eq!(InputSignal::impulse(1.0, 0.01).unwrap().eval(0.005), 100.0);
        assert_eq!(InputSignal::step(3.0).unwrap().eval(0.0), 3.0);
        assert_eq!(InputSignal::step(3.0).unwrap().eval_left(0.0), 0.0);
    }

    #[test]
    fn piecewise_linear_values() {
        let s = InputSignal::piecewise_linear(vec![(0.0, 0.0), (2.0, 1.0), (3.0, 0.0)]).unwrap();
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.eval(1.0), 0.5);
        assert_eq!(s.eval(2.5), 0.5);
        assert_eq!(s.eval(10.0), 0.0);
        let held = InputSignal::piecewise_linear(vec![(1.0, 2.0)]).unwrap();
        assert_eq!(held.eval(0.5), 0.0);
        assert_eq!(held.eval(1.0), 2.0);
        assert_eq!(held.eval_left(1.0), 0.0);
        assert_eq!(held.eval(7.0), 2.0);
    }

    #[test]
    fn breakpoint_lists() {
        assert_eq!(InputSignal::pulse(1.0, 0.0, 1.0).unwrap().breakpoints(), vec![0.0, 1.0]);
        assert!(InputSignal::Zero.breakpoints().is_empty());
        let s = InputSignal::piecewise_linear(vec![(0.0, 0.0), (2.0, 1.0), (3.0, 0.0)]).unwrap();
        assert_eq!(s.breakpoints(), vec![0.0, 2.0, 3.0]);
        assert_eq!(InputSignal::impulse(1.0, 0.1).unwrap().breakpoints(), vec![0.0, 0.1]);
    }

    #[test]
    fn laplace_values() {
        let one = Complex64::new(1.0, 0.0);
        assert!((InputSignal::step(1.0).unwrap().laplace(one).unwrap() - 1.0).norm() < 1e-15);
        let two = Complex64::new(2.0, 0.0);
        assert!((InputSignal::ramp(1.0).unwrap().laplace(two).unwrap() - 0.25).norm() < 1e-15);
        // integral of e^{-t} over [0, 1]
        let pulse = InputSignal::pulse(1.0, 0.0, 1.0).unwrap().laplace(one).unwrap();
        assert!((pulse.re - 0.632_120_558_828_557_7).abs() < 1e-12);
        assert!(InputSignal::Zero.laplace(one).is_err());
        assert!(InputSignal::step(1.0).unwrap().laplace(Complex64::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn pulse_is_step_minus_delayed_step() {
        let (u0, t_on, t_off) = (1.5, 0.5, 2.0);
        let pulse = InputSignal::pulse(u0, t_on, t_off).unwrap();
        let step = InputSignal::step(u0).unwrap();
        for s in [0.3, 0.7, 1.0, 2.5, 4.0] {
            let s = Complex64::new(s, 0.4);
            let delayed_on = step.laplace(s).unwrap() * (-s * t_on).exp();
            let delayed_off = step.laplace(s).unwrap() * (-s * t_off).exp();
            let diff = pulse.laplace(s).unwrap() - (delayed_on - delayed_off);
            assert!(diff.norm() < 1e-13);
        }
    }

    #[test]
    fn continuous_between_breakpoints() {
        let signals = [
            InputSignal::step(2.0).unwrap(),
            InputSignal::pulse(1.0, 0.5, 1.5).unwrap(),
            InputSignal::ramp(3.0).unwrap(),
            InputSignal::impulse(1.0, 0.25).unwrap(),
            InputSignal::piecewise_linear(vec![(0.2, 1.0), (1.0, -1.0), (2.0, 0.5)]).unwrap(),
        ];
        for s in &signals {
            let bps = s.breakpoints();
            let mut t = -1.0;
            while t < 3.0 {
                let near = bps.iter().any(|b| (t - b).abs() < 2e-3);
                if !near {
                    let jump = (s.eval(t + 1e-6) - s.eval(t)).abs();
                    assert!(jump < 1e-4, "{s} jumps at {t}");
                    assert_eq!(s.eval(t), s.eval_left(t));
                }
                t += 0.01;
            }
        }
    }

    #[test]
    fn spec_strings() {
        for text in ["zero", "step:2", "pulse:1,0,1", "ramp:0.5", "impulse:1,0.01", "pwl:0,0;2,1;3,0"] {
            let s: InputSignal = text.parse().unwrap();
            let again: InputSignal = s.to_string().parse().unwrap();
            assert_eq!(s, again);
        }
        assert_eq!("pulse:1,0,1".parse::<InputSignal>().unwrap(), InputSignal::pulse(1.0, 0.0, 1.0).unwrap());
        assert!("pulse:1,1,0".parse::<InputSignal>().is_err());
        assert!("pulse:1,0".parse::<InputSignal>().is_err());
        assert!("sine:1".parse::<InputSignal>().is_err());
        assert!("pwl:0,0;0,1".parse::<InputSignal>().is_err());
        assert!("impulse:1,0".parse::<InputSignal>().is_err());
    }
}
