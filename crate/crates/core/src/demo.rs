//! The `demo paper` battery: every worked example, each printed next to the
//! statement it reproduces, with a record of which operations ran.

use std::collections::BTreeSet;
use std::error::Error;
use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimate::{bayes_update, least_squares_fit, linspace, synthesize_data, FitOptions, FreeParam, PosteriorGrid};
use crate::expr::{parse, Scope};
use crate::ident::{
    estimate_a_from_step, estimate_lambda_from_pulse, estimate_lambda_from_ramp, fisher_cramer_rao, fit_derivative,
    gram_matrix, propagate_gray_box, pulse_end_slope, sensitivity_trajectories, Interval, Side,
};
use crate::lti::{
    convolve, deconvolve_impulse, find_similarity, frequency_response, impulse_response, io_equivalent, markov_parameters,
    minimality, sampled_responses, steady_state_gain, step_response, symmetry_orbit, SampledFunction, DEFAULT_EQUIV_TOL,
    DEFAULT_RANK_TOL,
};
use crate::signals::InputSignal;
use crate::sim::{closed_form_output, integrate, integrate_with_samples, SolverConfig, Trajectory};
use crate::systems::{get_registry_model, params, registry_ids, GeneralSystem, LinearSystem, ParamMap};

/// Every public operation the battery is required to exercise.
pub const ALL_OPS: &[&str] = &[
    "parse_expression",
    "evaluate_expression",
    "differentiate_expression",
    "build_linear_system",
    "get_registry_model",
    "eval_signal",
    "signal_breakpoints",
    "signal_laplace",
    "integrate",
    "closed_form_output",
    "impulse_response",
    "step_response",
    "convolve",
    "steady_state_gain",
    "markov_parameters",
    "minimality",
    "io_equivalent",
    "find_similarity",
    "frequency_response",
    "deconvolve_impulse",
    "symmetry_orbit",
    "sensitivity_trajectories",
    "gram_matrix",
    "fisher_cramer_rao",
    "fit_derivative",
    "estimate_a_from_step",
    "estimate_lambda_from_ramp",
    "estimate_lambda_from_pulse",
    "propagate_gray_box",
    "synthesize_data",
    "least_squares_fit",
    "bayes_update",
    "run_command",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoCheck {
    pub id: usize,
    pub title: &'static str,
    pub quote: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct DemoReport {
    pub checks: Vec<DemoCheck>,
    pub ops: BTreeSet<&'static str>,
}

impl DemoReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn missing_ops(&self) -> Vec<&'static str> {
        ALL_OPS.iter().copied().filter(|op| !self.ops.contains(op)).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{:>2}  {}  {}", c.id, if c.passed { "PASS" } else { "FAIL" }, c.title);
            let _ = writeln!(s, "      \"{}\"", c.quote);
            let _ = writeln!(s, "      {}", c.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{passed}/{} checks passed; {}/{} operations exercised", self.checks.len(), self.ops.len(), ALL_OPS.len());
        s
    }
}

type Outcome = Result<(bool, String), Box<dyn Error>>;

struct Demo {
    report: DemoReport,
}

impl Demo {
    fn op(&mut self, name: &'static str) {
        debug_assert!(ALL_OPS.contains(&name), "unlisted op {name}");
        self.report.ops.insert(name);
    }

    fn run(&mut self, title: &'static str, quote: &'static str, f: fn(&mut Demo) -> Outcome) {
        let (passed, detail) = match f(self) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let id = self.report.checks.len() + 1;
        self.report.checks.push(DemoCheck { id, title, quote, passed, detail });
    }

    fn model(&mut self, id: &str) -> Result<GeneralSystem, Box<dyn Error>> {
        self.op("get_registry_model");
        Ok(get_registry_model(id)?.system)
    }

    fn scalar(&mut self, a: f64, b: f64, c: f64) -> Result<LinearSystem, Box<dyn Error>> {
        self.op("build_linear_system");
        Ok(LinearSystem::scalar(a, b, c)?)
    }

    fn simulate(&mut self, sys: &GeneralSystem, p: &ParamMap, sig: &InputSignal, t1: f64) -> Result<Trajectory, Box<dyn Error>> {
        self.op("integrate");
        Ok(integrate(sys, p, sig, (0.0, t1), &SolverConfig::default())?)
    }
}

fn abc(a: f64, b: f64, c: f64) -> ParamMap {
    params(&[("a", a), ("b", b), ("c", c)])
}

fn lam(lambda: f64) -> ParamMap {
    params(&[("lambda", lambda), ("a_tot", 2.0)])
}

fn sampled(traj: &Trajectory) -> Result<SampledFunction, Box<dyn Error>> {
    Ok(SampledFunction::from_samples(&traj.times, traj.outputs.clone())?)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn transient_distinction(d: &mut Demo) -> Outcome {
    let sys = d.model("scalar-lti")?;
    let step = InputSignal::step(1.0)?;
    let y1 = d.simulate(&sys, &abc(1.0, 1.0, 1.0), &step, 5.0)?;
    let y2 = d.simulate(&sys, &abc(2.0, 1.0, 2.0), &step, 5.0)?;
    let e1 = y1.times.iter().zip(&y1.outputs).map(|(t, y)| (y - (1.0 - (-t).exp())).abs()).fold(0.0, f64::max);
    let e2 = y2.times.iter().zip(&y2.outputs).map(|(t, y)| (y - (1.0 - (-2.0 * t).exp())).abs()).fold(0.0, f64::max);
    let g1 = steady_state_gain(&d.scalar(1.0, 1.0, 1.0)?)?;
    let g2 = steady_state_gain(&d.scalar(2.0, 1.0, 2.0)?)?;
    d.op("steady_state_gain");
    d.op("closed_form_output");
    let cf = closed_form_output("scalar-lti", &abc(2.0, 1.0, 2.0), &step, 1.0)?;
    let gap = sup_diff(&y1.outputs, &y2.outputs);
    Ok((
        e1 <= 1e-6 && e2 <= 1e-6 && g1 == 1.0 && g2 == 1.0 && (cf - (1.0 - (-2.0f64).exp())).abs() < 1e-15 && gap >= 0.19,
        format!("max errors {e1:.2e}, {e2:.2e}; gains {g1}, {g2}; transient gap {gap:.4}"),
    ))
}

fn scalar_equivalence(d: &mut Demo) -> Outcome {
    let mut triples = Vec::new();
    for a in [0.5, 1.0, 2.0] {
        for b in [0.5, 1.0, 2.0, 4.0] {
            for c in [0.5, 1.0, 2.0, 4.0] {
                triples.push((a, b, c));
            }
        }
    }
    d.op("io_equivalent");
    let sys = d.model("scalar-lti")?;
    let signals = [InputSignal::step(1.0)?, InputSignal::pulse(1.0, 0.0, 1.0)?, InputSignal::ramp(1.0)?];
    let mut outputs = Vec::new();
    for &(a, b, c) in &triples {
        let mut per = Vec::new();
        for s in &signals {
            per.push(d.simulate(&sys, &abc(a, b, c), s, 5.0)?.outputs);
        }
        outputs.push(per);
    }
    let (mut mismatches, mut pairs, mut worst) = (0, 0, 0.0f64);
    for (i, t1) in triples.iter().enumerate() {
        for (j, t2) in triples.iter().enumerate() {
            let s1 = d.scalar(t1.0, t1.1, t1.2)?;
            let s2 = d.scalar(t2.0, t2.1, t2.2)?;
            let eq = io_equivalent(&s1, &s2, DEFAULT_EQUIV_TOL)?;
            if eq != (t1.0 == t2.0 && t1.1 * t1.2 == t2.1 * t2.2) {
                mismatches += 1;
            }
            if eq {
                pairs += 1;
                for k in 0..signals.len() {
                    worst = worst.max(sup_diff(&outputs[i][k], &outputs[j][k]));
                }
            }
        }
    }
    Ok((
        mismatches == 0 && worst <= 1e-8,
        format!("{} pairs, {mismatches} verdict mismatches, {pairs} equivalent, max output gap {worst:.2e}", triples.len().pow(2)),
    ))
}

fn a_recovery(d: &mut Demo) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (a, b, c) in [(2.0, 3.0, 0.5), (1.0, 1.0, 1.0)] {
        let sys = d.scalar(a, b, c)?;
        d.op("step_response");
        let (_, big_k) = sampled_responses(&sys, 1e-3, 1001)?;
        let k1 = step_response(&sys, 1.0)?;
        ok &= (k1 - big_k.values()[1000]).abs() < 1e-9;
        d.op("fit_derivative");
        d.op("estimate_a_from_step");
        let est = estimate_a_from_step(&big_k)?;
        ok &= (est - a).abs() / a <= 1e-3;
        detail.push(format!("({a},{b},{c}) -> a = {est:.6}"));
    }
    Ok((ok, detail.join("; ")))
}

fn step_invisibility(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system")?;
    let (mut out_err, mut col, mut all_inf) = (0.0f64, 0.0f64, true);
    for lambda in [0.5, 1.0, 2.0] {
        for u0 in [0.5, 1.0, 2.0] {
            let step = InputSignal::step(u0)?;
            let traj = d.simulate(&sys, &lam(lambda), &step, 5.0)?;
            out_err = out_err.max(traj.outputs.iter().map(|y| (y - 2.0 * u0).abs()).fold(0.0, f64::max));
            d.op("sensitivity_trajectories");
            let s = sensitivity_trajectories(&sys, &lam(lambda), &step, (0.0, 5.0), &SolverConfig::default())?;
            d.op("gram_matrix");
            let g = gram_matrix(&s)?;
            col = col.max(g.column_max("lambda").unwrap_or(f64::NAN) / g.max_eigenvalue());
            d.op("fisher_cramer_rao");
            all_inf &= fisher_cramer_rao(&s, 0.01)?.bound("lambda").is_some_and(f64::is_infinite);
        }
    }
    Ok((
        out_err <= 1e-6 && col <= 1e-10 && all_inf,
        format!("max |y - a_tot u0| = {out_err:.2e}; lambda column / lambda_max = {col:.2e}; crb(lambda) infinite: {all_inf}"),
    ))
}

fn ramp_identification(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system")?;
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        let y = sampled(&d.simulate(&sys, &lam(lambda), &InputSignal::ramp(1.0)?, 1.0)?)?;
        let d4 = fit_derivative(&y, 0.0, 4, Side::Right, 0.2, 6)?;
        d.op("estimate_lambda_from_ramp");
        let est = estimate_lambda_from_ramp(&y)?;
        ok &= (d4 - 2.0 * lambda).abs() <= 0.02 * 2.0 * lambda && (est - lambda).abs() <= 0.02 * lambda;
        detail.push(format!("lambda {lambda}: y''''(0+) = {d4:.4}, estimate {est:.4}"));
    }
    Ok((ok, detail.join("; ")))
}

fn pulse_identification(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system")?;
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        let pulse = InputSignal::pulse(1.0, 0.0, 1.0)?;
        let y = sampled(&d.simulate(&sys, &lam(lambda), &pulse, 2.0)?)?;
        let slope = pulse_end_slope(&y, 1.0)?;
        d.op("estimate_lambda_from_pulse");
        let est = estimate_lambda_from_pulse(&y, 1.0)?;
        ok &= (slope - ((-lambda).exp() - 1.0)).abs() <= 1e-4 && (est - lambda).abs() <= 1e-3;
        detail.push(format!("lambda {lambda}: y'(1+) = {slope:.6}, estimate {est:.6}"));
    }
    Ok((ok, detail.join("; ")))
}

fn symmetry_null_space(d: &mut Demo) -> Outcome {
    let sys = d.model("scalar-lti")?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_cos, mut ranks_ok, mut orbit_ok) = (1.0f64, true, true);
    for _ in 0..20 {
        let (a, b, c) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let s = sensitivity_trajectories(&sys, &abc(a, b, c), &InputSignal::step(1.0)?, (0.0, 10.0), &SolverConfig::default())?;
        let g = gram_matrix(&s)?;
        ranks_ok &= g.rank == 2;
        if let Some(v) = g.null_directions.first() {
            let target = DVector::from_vec(vec![0.0, b, -c]).normalize();
            worst_cos = worst_cos.min(v.dot(&target).abs());
        } else {
            worst_cos = 0.0;
        }
        d.op("symmetry_orbit");
        d.op("markov_parameters");
        let t = rng.random_range(0.2..5.0);
        let (a2, b2, c2) = symmetry_orbit(a, b, c, t)?;
        let m1 = markov_parameters(&d.scalar(a, b, c)?, 6);
        let m2 = markov_parameters(&d.scalar(a2, b2, c2)?, 6);
        orbit_ok &= m1.iter().zip(&m2).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
    Ok((
        ranks_ok && worst_cos >= 0.999 && orbit_ok,
        format!("rank 2 for all 20 triples: {ranks_ok}; worst null-direction cosine {worst_cos:.6}; orbit preserves Markov parameters: {orbit_ok}"),
    ))
}

fn gray_box(d: &mut Demo) -> Outcome {
    d.op("propagate_gray_box");
    let b = propagate_gray_box(Interval::point(1.0), Interval::new(0.01, 0.1)?)?;
    let point = propagate_gray_box(Interval::point(1.5), Interval::point(0.5))?;
    Ok((b.lo == 10.0 && b.hi == 100.0 && point == Interval::point(3.0), format!("b in {b}; point case b = {point}")))
}

fn bayesian(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system")?;
    let cfg = SolverConfig::default();
    let times = linspace(0.1, 4.0, 40);
    d.op("synthesize_data");
    let pulse = synthesize_data(&sys, &lam(1.0), &InputSignal::pulse(1.0, 0.0, 1.0)?, &times, 0.0, 0, &cfg)?.with_sigma(0.01);
    let step = synthesize_data(&sys, &lam(1.0), &InputSignal::step(1.0)?, &times, 0.0, 0, &cfg)?.with_sigma(0.01);
    let prior = PosteriorGrid::uniform(&["lambda"], vec![linspace(0.2, 3.0, 141)])?;
    d.op("bayes_update");
    let post = bayes_update(&prior, &pulse, &sys, &lam(1.0), &cfg)?;
    let flat = bayes_update(&prior, &step, &sys, &lam(1.0), &cfg)?;
    let mode = post.mode()[0];
    let total: f64 = post.probabilities().iter().sum();
    let drift = sup_diff(&flat.probabilities(), &prior.probabilities());
    Ok((
        (mode - 1.0).abs() <= 0.02 + 1e-12 && (total - 1.0).abs() <= 1e-12 && drift <= 1e-12,
        format!("pulse posterior mode {mode:.3}, mass {total:.15}; step posterior deviates from prior by {drift:.1e}"),
    ))
}

fn quasi_steady_state(d: &mut Demo) -> Outcome {
    let sys = d.model("fast-reporter-linear")?;
    let p = params(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("eps", 1e-3)]);
    let traj = d.simulate(&sys, &p, &InputSignal::step(1.0)?, 5.0)?;
    let gap = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= 0.1)
        .map(|(_, x)| (x[1] - x[0]).abs())
        .fold(0.0, f64::max);
    Ok((gap <= 1e-2, format!("sup over t >= 0.1 of |y - c x| = {gap:.2e}")))
}

fn near_degeneracy(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system-split")?;
    let bound = |lz: f64| -> Result<f64, Box<dyn Error>> {
        let p = params(&[("lambda_x", 1.0), ("lambda_z", lz), ("a_tot", 2.0)]);
        let s = sensitivity_trajectories(&sys, &p, &InputSignal::step(1.0)?, (0.0, 5.0), &SolverConfig::default())?;
        Ok(fisher_cramer_rao(&s, 0.01)?.bound("lambda_x").unwrap_or(f64::NAN))
    };
    let (far, near) = (bound(0.5)?, bound(0.95)?);
    let ratio = near / far;
    Ok((ratio >= 10.0, format!("crb(lambda_x): {far:.3e} at gap 0.5, {near:.3e} at gap 0.05 (x{ratio:.1})")))
}

fn deconvolution(d: &mut Demo) -> Outcome {
    let sys = d.scalar(1.0, 1.0, 1.0)?;
    let (k, big_k) = sampled_responses(&sys, 1e-3, 5001)?;
    d.op("impulse_response");
    let k2 = impulse_response(&sys, 2.0)?;
    let u = SampledFunction::from_signal(&InputSignal::step(1.0)?, 1e-3, 5001)?;
    d.op("eval_signal");
    d.op("convolve");
    let y = convolve(&k, &u)?;
    let conv_err = sup_diff(y.values(), big_k.values());
    d.op("deconvolve_impulse");
    let rec = deconvolve_impulse(&big_k, &u, 0.0)?;
    let exact: Vec<f64> = rec.times().map(|t| (-t).exp()).collect();
    let num: f64 = rec.values().iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = exact.iter().map(|v| v * v).sum();
    let rel = (num / den).sqrt();
    Ok((
        rel <= 1e-2 && (k2 - (-2.0f64).exp()).abs() < 1e-12 && conv_err < 1e-6,
        format!("relative L2 error of recovered k: {rel:.2e}; k*u vs K max gap {conv_err:.1e}"),
    ))
}

fn numerical_hygiene(d: &mut Demo) -> Outcome {
    let signals = [
        InputSignal::Zero,
        InputSignal::step(1.0)?,
        InputSignal::pulse(1.0, 0.0, 1.0)?,
        InputSignal::ramp(1.0)?,
        InputSignal::impulse(1.0, 0.05)?,
        InputSignal::piecewise_linear(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)])?,
    ];
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for id in registry_ids() {
        let entry = get_registry_model(id)?;
        d.op("get_registry_model");
        for sig in &signals {
            let s = sensitivity_trajectories(&entry.system, &entry.default_params, sig, (0.0, 3.0), &cfg)?;
            for (j, name) in entry.system.param_names().iter().enumerate() {
                let theta = entry.default_params[name];
                let step = 1e-5 * theta.abs().max(1.0);
                let mut up = entry.default_params.clone();
                up.insert(name.clone(), theta + step);
                let mut dn = entry.default_params.clone();
                dn.insert(name.clone(), theta - step);
                let yu = integrate(&entry.system, &up, sig, (0.0, 3.0), &cfg)?.outputs;
                let yd = integrate(&entry.system, &dn, sig, (0.0, 3.0), &cfg)?.outputs;
                let fd: Vec<f64> = yu.iter().zip(&yd).map(|(a, b)| (a - b) / (2.0 * step)).collect();
                let col = s.column(j);
                let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let err = sup_diff(&fd, &col);
                worst = worst.max(if scale > 1e-8 { err / scale } else { err });
            }
        }
    }
    let sys = d.model("scalar-lti")?;
    let step = InputSignal::step(1.0)?;
    let err_at = |h: f64| -> Result<f64, Box<dyn Error>> {
        let traj = integrate(&sys, &abc(1.0, 1.0, 1.0), &step, (0.0, 2.0), &SolverConfig::with_step(h))?;
        Ok(traj.times.iter().zip(&traj.outputs).map(|(t, y)| (y - (1.0 - (-t).exp())).abs()).fold(0.0, f64::max))
    };
    let ratio = err_at(0.1)? / err_at(0.05)?;
    Ok((worst <= 1e-4 && ratio >= 12.0, format!("worst sensitivity mismatch {worst:.2e} (relative); RK4 halving ratio {ratio:.2}")))
}

fn expression_dsl(d: &mut Demo) -> Outcome {
    let scope = Scope::new(&["x", "z"], &["lambda", "a_tot"])?;
    d.op("parse_expression");
    let out = parse("x + u*(a_tot - z)", &scope)?;
    let rhs = parse("-lambda*x + u^2", &scope)?;
    d.op("evaluate_expression");
    let vals = params(&[("x", 1.0), ("z", 0.5), ("lambda", 2.0), ("a_tot", 2.0)]);
    let y = out.eval_named(&vals, 2.0, 0.0)?;
    d.op("differentiate_expression");
    let dz = out.diff(scope.var("z").ok_or("z not in scope")?).to_string();
    let dl = rhs.diff(scope.var("lambda").ok_or("lambda not in scope")?).to_string();
    Ok((y == 4.0 && dz == "-u" && dl == "-x", format!("y(x=1, z=0.5, u=2) = {y}; dy/dz = {dz}; d(rhs)/dlambda = {dl}")))
}

fn laplace_consistency(d: &mut Demo) -> Outcome {
    let sys = d.scalar(1.0, 1.0, 1.0)?;
    let step = InputSignal::step(1.0)?;
    d.op("signal_breakpoints");
    let bp_ok = InputSignal::pulse(1.0, 0.0, 1.0)?.breakpoints() == vec![0.0, 1.0];
    let model = d.model("scalar-lti")?;
    let traj = integrate_with_samples(&model, &abc(1.0, 1.0, 1.0), &step, (0.0, 40.0), &SolverConfig::with_step(1e-2), &[])?;
    d.op("integrate");
    let mut worst = 0.0f64;
    for sigma in [0.5, 1.0, 2.0] {
        d.op("frequency_response");
        d.op("signal_laplace");
        let s = Complex64::new(sigma, 0.0);
        let predicted = (frequency_response(&sys, s)? * step.laplace(s)?).re;
        let integrand: Vec<f64> = traj.times.iter().zip(&traj.outputs).map(|(t, y)| y * (-sigma * t).exp()).collect();
        let numeric: f64 = traj.times.windows(2).zip(integrand.windows(2)).map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1])).sum();
        worst = worst.max((predicted - numeric).abs());
    }
    Ok((bp_ok && worst <= 1e-3, format!("max |W(s) U(s) - L[y](s)| over s in {{0.5, 1, 2}}: {worst:.2e}")))
}

fn similarity_theorem(d: &mut Demo) -> Outcome {
    let s1 = LinearSystem::from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.0]], &[1.0, 1.0], &[1.0, 1.0])?;
    let t = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
    let t_inv = t.clone().try_inverse().ok_or("T singular")?;
    let s2 = LinearSystem::new(&t * s1.a() * &t_inv, &t * s1.b(), (s1.c().transpose() * &t_inv).transpose())?;
    d.op("build_linear_system");
    d.op("minimality");
    let minimal = minimality(&s1, DEFAULT_RANK_TOL).minimal && minimality(&s2, DEFAULT_RANK_TOL).minimal;
    d.op("find_similarity");
    let found = find_similarity(&s1, &s2, DEFAULT_EQUIV_TOL)?;
    let err = (&found - &t).amax();
    Ok((minimal && err <= 1e-9, format!("both realizations minimal: {minimal}; recovered T differs by {err:.1e}")))
}

fn global_fit(d: &mut Demo) -> Outcome {
    let sys = d.model("lambda-system")?;
    let cfg = SolverConfig::default();
    let e = synthesize_data(&sys, &lam(1.0), &InputSignal::ramp(1.0)?, &linspace(0.1, 5.0, 50), 0.0, 0, &cfg)?;
    d.op("least_squares_fit");
    let fit = least_squares_fit(&sys, &[e], &lam(1.0), &[FreeParam::new("lambda", 0.3, 0.01, 10.0)], &cfg, &FitOptions::default())?;
    let est = fit.value("lambda").unwrap_or(f64::NAN);
    Ok(((est - 1.0).abs() <= 1e-6, format!("lambda from 0.3 -> {est:.9} in {} iterations", fit.iterations)))
}

fn command_line(d: &mut Demo) -> Outcome {
    d.op("run_command");
    let run = |args: &[&str]| -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv: Vec<String> = std::iter::once("ioident").chain(args.iter().copied()).map(String::from).collect();
        let code = crate::cli::run_command(&argv, &mut out, &mut err);
        (code, String::from_utf8_lossy(&out).trim().to_string())
    };
    let gain = run(&["gain", "--a", "2", "--b", "1", "--c", "2"]);
    let equiv = run(&["equiv", "--first", "1,2,3", "--second", "1,6,1"]);
    Ok((
        gain == (0, "1".to_string()) && equiv == (0, "equivalent, T=3".to_string()),
        format!("`gain --a 2 --b 1 --c 2` -> {}; `equiv 1,2,3 vs 1,6,1` -> {}", gain.1, equiv.1),
    ))
}

/// Runs the whole battery.
pub fn run_paper_demo() -> DemoReport {
    let mut d = Demo { report: DemoReport::default() };
    d.run("transient distinction", "Only transient measurements reveal this distinction.", transient_distinction);
    d.run("scalar equivalence law", "the product bc is an i/o invariant", scalar_equivalence);
    d.run("a from the step response", "a = -K''(0)/K'(0) can be estimated", a_recovery);
    d.run("step invisibility", "with step inputs, no matter how many experiments (different values of u0) are carried out, it is impossible to obtain any information about lambda", step_invisibility);
    d.run("ramp identification", "lim_{t->0+} y''''(t) = 2 lambda, and therefore lambda can be identified by differentiation", ramp_identification);
    d.run("pulse identification", "lim_{t->1+} y'(t) = e^{-lambda} - 1, and therefore lambda = -ln(1 + lim_{t->1+} y'(t))", pulse_identification);
    d.run("symmetry and null space", "(a,b,c) is equivalent to (a,Tb,cT^{-1}) for all T != 0", symmetry_null_space);
    d.run("gray-box interval", "Then, we know that b in [10,100]", gray_box);
    d.run("Bayesian update", "P(pi|e) = P(e|pi) P(pi) / P(e), through an application of Bayes Rule", bayesian);
    d.run("quasi-steady-state reporter", "Using a quasi-steady state approximation (singular perturbation), we set eps = 0 and consider y = cx", quasi_steady_state);
    d.run("near-degenerate rates", "a very small sensitivity and therefore very high estimator variance (Cramer-Rao bounds), thus rendering estimation practically impossible", near_degeneracy);
    d.run("deconvolution", "y = k * u (star denotes convolution) ... k can then be obtained by Laplace inversion", deconvolution);
    d.run("numerical hygiene", "sensitivities from the variational equations agree with finite differences", numerical_hygiene);
    d.run("expression language", "y = x + u(a-z)", expression_dsl);
    d.run("frequency response", "y^(s) = W(s) u^(s), where W(s) is the frequency response of the system", laplace_consistency);
    d.run("similarity theorem", "two triples (A_i,b_i,c_i), i=1,2 are i/o equivalent if and only if (TA_1T^{-1},Tb_1,c_1T^{-1})=(A_2,b_2,c_2)", similarity_theorem);
    d.run("least-squares fit", "through a least-squares regression or another technique", global_fit);
    d.run("command line", "(i) dx/dt=-x+u with y=x and (ii) dx/dt=-2x+u with y=2x have the same steady-state gain, gamma = 1", command_line);
    d.report
}
