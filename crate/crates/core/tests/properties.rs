use ioident::estimate::{least_squares_fit, linspace, synthesize_data, FitOptions, FreeParam};
use ioident::expr::{parse, Env};
use ioident::ident::{fisher_cramer_rao, gram_matrix, sensitivity_trajectories, sensitivity_with_samples};
use ioident::lti::{
    frequency_response, io_equivalent, markov_parameters, steady_state_gain, symmetry_orbit, DEFAULT_EQUIV_TOL,
};
use ioident::sim::closed_form_state;
use ioident::systems::{get_registry_model, registry_ids};
use ioident::{integrate, Expr, InputSignal, LinearSystem, ParamMap, Scope, SignalClass, SolverConfig, Var};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn scope() -> Scope {
    Scope::new(&["x", "z"], &["p", "q"]).unwrap()
}

fn leaf() -> impl Strategy<Value = Expr> {
    let s = scope();
    prop_oneof![
        (0u32..40).prop_map(|k| Expr::Const(f64::from(k) / 8.0)),
        Just(parse("x", &s).unwrap()),
        Just(parse("z", &s).unwrap()),
        Just(parse("p", &s).unwrap()),
        Just(parse("q", &s).unwrap()),
        Just(Expr::Input),
        Just(Expr::Time),
    ]
}

/// Random trees that stay finite on [-1, 1]^n: logs take `1 + e^2`,
/// denominators are `1 + e^2`.
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let one_plus_sq = |e: Expr| Expr::Add(Box::new(Expr::Const(1.0)), Box::new(Expr::Pow(Box::new(e), 2)));
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| Expr::Div(Box::new(a), Box::new(one_plus_sq(b)))),
            (inner.clone(), 0u32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.clone().prop_map(|a| Expr::Exp(Box::new(a))),
            inner.prop_map(move |a| Expr::Ln(Box::new(one_plus_sq(a)))),
        ]
    })
}

fn point() -> impl Strategy<Value = ([f64; 2], [f64; 2], f64, f64)> {
    (prop::array::uniform2(-1.0..1.0f64), prop::array::uniform2(-1.0..1.0f64), -1.0..1.0f64, 0.0..1.0f64)
}

fn eval(e: &Expr, (x, p, u, t): &([f64; 2], [f64; 2], f64, f64)) -> f64 {
    e.eval(&Env { states: x, params: p, input: *u, time: *t }).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivative_matches_central_difference(e in expr(), pt in point(), which in 0usize..4) {
        let var = [Var::State(0), Var::State(1), Var::Param(0), Var::Param(1)][which];
        let d = eval(&e.diff(var), &pt);
        let h = 1e-5;
        let shifted = |delta: f64| {
            let mut q = pt;
            match var {
                Var::State(i) => q.0[i] += delta,
                Var::Param(i) => q.1[i] += delta,
            }
            eval(&e, &q)
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let scale = eval(&e, &pt).abs().max(1.0);
        prop_assert!((d - fd).abs() <= 1e-5 * (scale + d.abs()), "{e}: symbolic {d}, fd {fd}");
    }

    #[test]
    fn printing_round_trips(e in expr(), pt in point()) {
        let text = e.to_string();
        let back = parse(&text, &scope()).unwrap();
        prop_assert!(close(eval(&e, &pt), eval(&back, &pt), 1e-12), "{text} -> {back}");
        prop_assert_eq!(back.to_string(), parse(&back.to_string(), &scope()).unwrap().to_string());
    }

    #[test]
    fn simplify_preserves_value(e in expr(), pt in point()) {
        let s = e.simplify();
        prop_assert!(close(eval(&e, &pt), eval(&s, &pt), 1e-9), "{e} vs {s}");
        prop_assert!(s.depth() <= e.depth());
    }
}

fn signal_for(class: SignalClass, level: f64) -> Option<InputSignal> {
    match class {
        SignalClass::Zero => Some(InputSignal::Zero),
        SignalClass::Step => InputSignal::step(level).ok(),
        SignalClass::Pulse => InputSignal::pulse(level, 0.5, 1.5).ok(),
        SignalClass::Ramp => InputSignal::ramp(level).ok(),
        SignalClass::Impulse => InputSignal::impulse(level, 0.2).ok(),
        _ => None,
    }
}

fn scaled_defaults(id: &str, scale: &[f64]) -> ParamMap {
    let entry = get_registry_model(id).unwrap();
    entry
        .system
        .param_names()
        .iter()
        .zip(scale.iter().cycle())
        .map(|(n, s)| (n.clone(), entry.default_params[n] * s))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_forms_satisfy_their_odes(
        model in 0usize..5,
        scale in prop::collection::vec(0.5..2.0f64, 4),
        level in 0.2..2.0f64,
        t in 0.05..3.0f64,
    ) {
        let id = registry_ids()[model];
        let entry = get_registry_model(id).unwrap();
        let p = scaled_defaults(id, &scale);
        let theta = entry.system.param_vector(&p).unwrap();
        for &class in &entry.closed_forms {
            let sig = signal_for(class, level).unwrap();
            if sig.breakpoints().iter().any(|b| (b - t).abs() < 1e-3) {
                continue;
            }
            let x = closed_form_state(id, &p, &sig, t).unwrap();
            let h = 1e-6;
            let (up, dn) = (closed_form_state(id, &p, &sig, t + h).unwrap(), closed_form_state(id, &p, &sig, t - h).unwrap());
            for (i, rhs) in entry.system.rhs().iter().enumerate() {
                let fd = (up[i] - dn[i]) / (2.0 * h);
                let f = rhs.eval(&Env { states: &x, params: theta.as_slice(), input: sig.eval(t), time: t }).unwrap();
                prop_assert!((fd - f).abs() <= 1e-5 * (1.0 + f.abs()), "{id} {sig} state {i} at {t}: fd {fd}, rhs {f}");
            }
        }
    }

    #[test]
    fn symmetry_orbit_preserves_io_behaviour(a in 0.1..5.0f64, b in 0.1..5.0f64, c in 0.1..5.0f64, k in 0.05..20.0f64) {
        let (a2, b2, c2) = symmetry_orbit(a, b, c, k).unwrap();
        let (s1, s2) = (LinearSystem::scalar(a, b, c).unwrap(), LinearSystem::scalar(a2, b2, c2).unwrap());
        for (m1, m2) in markov_parameters(&s1, 8).iter().zip(markov_parameters(&s2, 8)) {
            prop_assert!((m1 - m2).abs() <= 1e-12 * m1.abs().max(1e-300));
        }
        prop_assert!(io_equivalent(&s1, &s2, DEFAULT_EQUIV_TOL).unwrap());
        prop_assert!(close(steady_state_gain(&s1).unwrap(), steady_state_gain(&s2).unwrap(), 1e-14));
    }

    #[test]
    fn transfer_function_times_input_is_output_transform(
        a in 0.3..3.0f64, b in 0.2..3.0f64, c in 0.2..3.0f64, s in 0.3..3.0f64, class in 0usize..3,
    ) {
        let sig = [InputSignal::step(1.0).unwrap(), InputSignal::pulse(1.0, 0.0, 1.0).unwrap(), InputSignal::ramp(0.5).unwrap()][class].clone();
        let sys = LinearSystem::scalar(a, b, c).unwrap();
        let w = frequency_response(&sys, Complex64::new(s, 0.0)).unwrap();
        let predicted = (w * sig.laplace(Complex64::new(s, 0.0)).unwrap()).re;
        // numerical transform of the closed-form output
        let p: ParamMap = [("a", a), ("b", b), ("c", c)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let t_end = 40.0 / s.min(a);
        let grid = linspace(0.0, t_end, 40001);
        let f: Vec<f64> = grid.iter().map(|&t| c * closed_form_state("scalar-lti", &p, &sig, t).unwrap()[0] * (-s * t).exp()).collect();
        let dt = grid[1] - grid[0];
        let integral = dt * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]));
        prop_assert!((integral - predicted).abs() <= 1e-4 * predicted.abs().max(1e-3), "{integral} vs {predicted}");
    }

    #[test]
    fn equal_gains_still_differ_in_transients(a in 0.5..3.0f64, ratio in 1.5..4.0f64) {
        // (a, 1, a) and (ra, 1, ra) share gain 1 but not their transients
        let sys = get_registry_model("scalar-lti").unwrap().system;
        let step = InputSignal::step(1.0).unwrap();
        let cfg = SolverConfig::with_step(1e-2);
        let run = |k: f64| {
            let p: ParamMap = [("a", k), ("b", 1.0), ("c", k)].iter().map(|(n, v)| (n.to_string(), *v)).collect();
            integrate(&sys, &p, &step, (0.0, 30.0), &cfg).unwrap()
        };
        let (y1, y2) = (run(a), run(ratio * a));
        let gap = y1.outputs.iter().zip(&y2.outputs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let exact = y1.times.iter().map(|t| ((-a * t).exp() - (-ratio * a * t).exp()).abs()).fold(0.0, f64::max);
        prop_assert!((gap - exact).abs() <= 1e-6);
        prop_assert!(gap > 0.1);
        prop_assert!((y1.outputs.last().unwrap() - y2.outputs.last().unwrap()).abs() < 1e-6);
    }
}

fn signals() -> Vec<InputSignal> {
    vec![
        InputSignal::step(1.0).unwrap(),
        InputSignal::pulse(1.0, 0.0, 1.0).unwrap(),
        InputSignal::ramp(1.0).unwrap(),
        InputSignal::impulse(1.0, 0.1).unwrap(),
        InputSignal::piecewise_linear(vec![(0.0, 0.5), (1.0, 1.5), (2.0, 0.0)]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sensitivities_match_finite_differences(
        model in 0usize..3, scale in prop::collection::vec(0.6..1.6f64, 3), which in 0usize..5,
    ) {
        let id = ["scalar-lti", "lambda-system", "lambda-system-split"][model];
        let sys = get_registry_model(id).unwrap().system;
        let p = scaled_defaults(id, &scale);
        let sig = &signals()[which];
        let cfg = SolverConfig::with_step(2e-3);
        let s = sensitivity_trajectories(&sys, &p, sig, (0.0, 2.0), &cfg).unwrap();
        for name in sys.param_names() {
            let step = 1e-5 * p[name].abs().max(1.0);
            let run = |v: f64| {
                let mut q = p.clone();
                q.insert(name.clone(), v);
                integrate(&sys, &q, sig, (0.0, 2.0), &cfg).unwrap().outputs
            };
            let (up, dn) = (run(p[name] + step), run(p[name] - step));
            let col = s.column_by_name(name).unwrap();
            // floor: identically-zero columns compare against finite-difference roundoff
            let scale = col.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
            for ((u, d), c) in up.iter().zip(&dn).zip(&col) {
                prop_assert!(((u - d) / (2.0 * step) - c).abs() <= 1e-4 * scale);
            }
        }
    }

    #[test]
    fn scalar_gram_null_direction_is_the_orbit_tangent(a in 0.3..3.0f64, b in 0.3..3.0f64, c in 0.3..3.0f64) {
        let sys = get_registry_model("scalar-lti").unwrap().system;
        let p: ParamMap = [("a", a), ("b", b), ("c", c)].iter().map(|(n, v)| (n.to_string(), *v)).collect();
        let s = sensitivity_trajectories(&sys, &p, &InputSignal::step(1.0).unwrap(), (0.0, 10.0), &SolverConfig::default()).unwrap();
        let g = gram_matrix(&s).unwrap();
        prop_assert_eq!(g.rank, 2);
        let tangent = DVector::from_vec(vec![0.0, b, -c]).normalize();
        prop_assert!(g.null_directions[0].dot(&tangent).abs() >= 0.999);
    }

    #[test]
    fn fisher_information_grows_with_samples(n in 5usize..30, extra in 1usize..30, lz in 0.2..0.9f64) {
        let sys = get_registry_model("lambda-system-split").unwrap().system;
        let p: ParamMap = [("lambda_x", 1.0), ("lambda_z", lz), ("a_tot", 2.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let all = linspace(0.1, 5.0, n + extra);
        let fewer: Vec<f64> = all.iter().copied().step_by(2).take(n.min(all.len())).collect();
        let s = sensitivity_with_samples(&sys, &p, &InputSignal::step(1.0).unwrap(), (0.0, 5.0), &SolverConfig::default(), &all).unwrap();
        let small = fisher_cramer_rao(&s.at_times(&fewer).unwrap(), 0.05).unwrap();
        let large = fisher_cramer_rao(&s.at_times(&all).unwrap(), 0.05).unwrap();
        let tol = 1e-10 * large.fim.eigenvalues[0];
        for (lo, hi) in small.fim.eigenvalues.iter().zip(&large.fim.eigenvalues) {
            prop_assert!(hi + tol >= *lo);
        }
        for (lo, hi) in small.crb.iter().zip(&large.crb) {
            prop_assert!(*hi <= lo * (1.0 + 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fit_flat_direction_matches_gram_null_space(a in 0.5..2.0f64, b in 0.5..2.0f64, c in 0.5..2.0f64) {
        let sys = get_registry_model("scalar-lti").unwrap().system;
        let truth: ParamMap = [("a", a), ("b", b), ("c", c)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let cfg = SolverConfig::default();
        let times = linspace(0.1, 6.0, 60);
        let data = synthesize_data(&sys, &truth, &InputSignal::step(1.0).unwrap(), &times, 0.0, 0, &cfg).unwrap();
        let free = [FreeParam::new("a", 1.0, 0.05, 10.0), FreeParam::new("b", 1.0, 0.05, 10.0), FreeParam::new("c", 1.0, 0.05, 10.0)];
        let fit = least_squares_fit(&sys, &[data], &truth, &free, &cfg, &FitOptions::default()).unwrap();
        let (ah, bh, ch) = (fit.value("a").unwrap(), fit.value("b").unwrap(), fit.value("c").unwrap());
        prop_assert!((ah - a).abs() <= 1e-6 * a);
        prop_assert!((bh * ch - b * c).abs() <= 1e-6 * b * c);
        let nulls = fit.covariance.null_directions();
        prop_assert_eq!(nulls.len(), 1);
        let tangent = DVector::from_vec(vec![0.0, bh, -ch]).normalize();
        prop_assert!(nulls[0].dot(&tangent).abs() >= 0.999);
        prop_assert!(fit.covariance.variance_along(tangent.as_slice()).is_infinite());
        prop_assert!(fit.covariance.variance(0).is_finite());
    }
}
