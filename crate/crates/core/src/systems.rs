//! Parameterized input/output systems and the built-in model registry.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError, Scope, Var};
use crate::signals::SignalClass;

/// Parameter values keyed by name.
pub type ParamMap = BTreeMap<String, f64>;

/// Builds a [`ParamMap`] from `(name, value)` pairs.
pub fn params<S: AsRef<str>>(pairs: &[(S, f64)]) -> ParamMap {
    pairs.iter().map(|(k, v)| (k.as_ref().to_string(), *v)).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("parameter `{0}` is not declared by the system")]
    UnknownParameter(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Linear time-invariant system `dx/dt = A x + b u`, `y = c x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self, SystemError> {
        let n = a.nrows();
        if n == 0 {
            return Err(SystemError::Dimension("state dimension must be at least 1".into()));
        }
        if a.ncols() != n {
            return Err(SystemError::Dimension(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.len() != n {
            return Err(SystemError::Dimension(format!("b has length {}, expected {n}", b.len())));
        }
        if c.len() != n {
            return Err(SystemError::Dimension(format!("c has length {}, expected {n}", c.len())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::NonFinite("A"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::NonFinite("b"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::NonFinite("c"));
        }
        Ok(Self { a, b, c })
    }

    /// Builds from row-major `A` rows.
    pub fn from_rows(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Self, SystemError> {
        let n = a.len();
        if a.iter().any(|row| row.len() != n) {
            return Err(SystemError::Dimension("A rows must all have length n".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        Self::new(a, DVector::from_column_slice(b), DVector::from_column_slice(c))
    }

    /// The scalar triple `(a, b, c)` meaning `dx/dt = -a x + b u`, `y = c x`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Result<Self, SystemError> {
        Self::new(DMatrix::from_element(1, 1, -a), DVector::from_element(1, b), DVector::from_element(1, c))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Output row, stored as a column vector.
    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// Expression form with numeric coefficients and no parameters.
    pub fn to_general(&self) -> GeneralSystem {
        let n = self.dim();
        let names: Vec<String> = (0..n).map(|i| format!("x{}", i + 1)).collect();
        let scope = Scope::new(&names, &[] as &[&str]).expect("generated names are valid");
        let state = |i: usize| Expr::State(expr::Symbol { name: names[i].clone(), index: i });
        let linear = |coeffs: Vec<f64>| {
            coeffs
                .into_iter()
                .enumerate()
                .fold(expr::constant(0.0), |acc, (j, k)| expr::add(acc, expr::mul(expr::constant(k), state(j))))
        };
        let rhs = (0..n)
            .map(|i| {
                let row = linear(self.a.row(i).iter().copied().collect());
                expr::add(row, expr::mul(expr::constant(self.b[i]), Expr::Input))
            })
            .collect();
        let output = linear(self.c.iter().copied().collect());
        GeneralSystem { scope, rhs, output, x0: vec![0.0; n] }
    }
}

/// Expression-based system `dx/dt = f(x, theta, u, t)`, `y = g(x, theta, u, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralSystem {
    scope: Scope,
    rhs: Vec<Expr>,
    output: Expr,
    x0: Vec<f64>,
}

impl GeneralSystem {
    pub fn new(scope: Scope, rhs: Vec<Expr>, output: Expr, x0: Option<Vec<f64>>) -> Result<Self, SystemError> {
        let n = scope.states().len();
        if n == 0 {
            return Err(SystemError::Dimension("a system needs at least one state".into()));
        }
        if rhs.len() != n {
            return Err(SystemError::Dimension(format!("{} right-hand sides for {n} states", rhs.len())));
        }
        let x0 = x0.unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(SystemError::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::NonFinite("x0"));
        }
        for e in rhs.iter().chain(std::iter::once(&output)) {
            check_symbols(e, &scope)?;
        }
        Ok(Self { scope, rhs, output, x0 })
    }

    /// Parses right-hand sides (one per state, in order) and the output.
    pub fn parse<S: AsRef<str>>(
        states: &[S],
        param_names: &[S],
        rhs: &[S],
        output: &str,
        x0: Option<Vec<f64>>,
    ) -> Result<Self, SystemError> {
        let scope = Scope::new(states, param_names)?;
        let rhs = rhs
            .iter()
            .map(|r| expr::parse(r.as_ref(), &scope))
            .collect::<Result<Vec<_>, _>>()?;
        let output = expr::parse(output, &scope)?;
        Self::new(scope, rhs, output, x0)
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn state_names(&self) -> &[String] {
        self.scope.states()
    }

    pub fn param_names(&self) -> &[String] {
        self.scope.params()
    }

    pub fn n_states(&self) -> usize {
        self.rhs.len()
    }

    pub fn n_params(&self) -> usize {
        self.scope.params().len()
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn output(&self) -> &Expr {
        &self.output
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Resolves a name map into a vector ordered like [`param_names`](Self::param_names).
    pub fn param_vector(&self, values: &ParamMap) -> Result<Vec<f64>, SystemError> {
        if let Some(unknown) = values.keys().find(|k| !self.scope.params().contains(k)) {
            return Err(SystemError::UnknownParameter(unknown.clone()));
        }
        self.scope
            .params()
            .iter()
            .map(|p| values.get(p).copied().ok_or_else(|| SystemError::UnboundParameter(p.clone())))
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        match self.scope.var(name) {
            Some(Var::Param(j)) => Some(j),
            _ => None,
        }
    }
}

fn check_symbols(e: &Expr, scope: &Scope) -> Result<(), SystemError> {
    let mismatch = |name: &str| SystemError::Expr(ExprError::UnknownIdentifier { name: name.to_string(), offset: 0 });
    match e {
        Expr::State(s) => match scope.states().get(s.index) {
            Some(n) if *n == s.name => Ok(()),
            _ => Err(mismatch(&s.name)),
        },
        Expr::Param(s) => match scope.params().get(s.index) {
            Some(n) if *n == s.name => Ok(()),
            _ => Err(mismatch(&s.name)),
        },
        Expr::Const(c) if !c.is_finite() => Err(SystemError::NonFinite("expression constant")),
        Expr::Const(_) | Expr::Input | Expr::Time => Ok(()),
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) => check_symbols(a, scope),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            check_symbols(a, scope)?;
            check_symbols(b, scope)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRegistryEntry {
    pub id: String,
    pub description: String,
    pub system: GeneralSystem,
    pub default_params: ParamMap,
    /// Signal classes with an analytic solution in [`crate::sim::closed_form_state`].
    pub closed_forms: Vec<SignalClass>,
}

struct ModelDef {
    id: &'static str,
    description: &'static str,
    states: &'static [&'static str],
    params: &'static [(&'static str, f64)],
    rhs: &'static [&'static str],
    output: &'static str,
    closed_forms: &'static [SignalClass],
}

const MODEL_DEFS: &[ModelDef] = &[
    ModelDef {
        id: "scalar-lti",
        description: "single species with linear decay and a linear reporter",
        states: &["x"],
        params: &[("a", 1.0), ("b", 1.0), ("c", 1.0)],
        rhs: &["-a*x + b*u"],
        output: "c*x",
        closed_forms: &[SignalClass::Zero, SignalClass::Step, SignalClass::Pulse, SignalClass::Ramp, SignalClass::Impulse],
    },
    ModelDef {
        id: "lambda-system",
        description: "two species with a shared degradation rate observed through a sequestering reporter",
        states: &["x", "z"],
        params: &[("lambda", 1.0), ("a_tot", 2.0)],
        rhs: &["-lambda*x + u^2", "-lambda*z + u"],
        output: "x + u*(a_tot - z)",
        closed_forms: &[SignalClass::Zero, SignalClass::Step, SignalClass::Pulse, SignalClass::Ramp, SignalClass::Impulse],
    },
    ModelDef {
        id: "lambda-system-split",
        description: "lambda-system with independent degradation rates for x and z",
        states: &["x", "z"],
        params: &[("lambda_x", 1.0), ("lambda_z", 0.5), ("a_tot", 2.0)],
        rhs: &["-lambda_x*x + u^2", "-lambda_z*z + u"],
        output: "x + u*(a_tot - z)",
        closed_forms: &[SignalClass::Zero, SignalClass::Step],
    },
    ModelDef {
        id: "fast-reporter-linear",
        description: "scalar linear species with an explicit fast reporter",
        states: &["x", "y"],
        params: &[("a", 1.0), ("b", 1.0), ("c", 1.0), ("eps", 1e-3)],
        rhs: &["-a*x + b*u", "(-y + c*x)/eps"],
        output: "y",
        closed_forms: &[SignalClass::Zero, SignalClass::Step],
    },
    ModelDef {
        id: "fast-reporter-nonlinear",
        description: "lambda-system with an explicit fast reporter",
        states: &["x", "z", "y"],
        params: &[("lambda", 1.0), ("a_tot", 2.0), ("eps", 1e-3)],
        rhs: &["-lambda*x + u^2", "-lambda*z + u", "(-y + x + u*(a_tot - z))/eps"],
        output: "y",
        closed_forms: &[SignalClass::Zero, SignalClass::Step],
    },
];

fn registry() -> &'static [ModelRegistryEntry] {
    static REGISTRY: OnceLock<Vec<ModelRegistryEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        MODEL_DEFS
            .iter()
            .map(|d| {
                let names: Vec<&str> = d.params.iter().map(|p| p.0).collect();
                let system = GeneralSystem::parse(d.states, &names, d.rhs, d.output, None)
                    .unwrap_or_else(|e| panic!("registry model {} is malformed: {e}", d.id));
                ModelRegistryEntry {
                    id: d.id.to_string(),
                    description: d.description.to_string(),
                    system,
                    default_params: params(d.params),
                    closed_forms: d.closed_forms.to_vec(),
                }
            })
            .collect()
    })
}

/// Ids of all registered models.
pub fn registry_ids() -> Vec<&'static str> {
    MODEL_DEFS.iter().map(|d| d.id).collect()
}

/// Returns an owned copy of a registered model.
pub fn get_registry_model(id: &str) -> Result<ModelRegistryEntry, SystemError> {
    registry()
        .iter()
        .find(|e| e.id == id)
        .cloned()
        .ok_or_else(|| SystemError::UnknownModel(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_paper_pair() {
        let one = LinearSystem::scalar(1.0, 1.0, 1.0).unwrap();
        assert_eq!(one.a()[(0, 0)], -1.0);
        let two = LinearSystem::from_rows(&[vec![-2.0]], &[1.0], &[2.0]).unwrap();
        assert_eq!(two, LinearSystem::scalar(2.0, 1.0, 2.0).unwrap());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let a = DMatrix::zeros(2, 2);
        let err = LinearSystem::new(a, DVector::zeros(3), DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, SystemError::Dimension(_)));
        assert!(LinearSystem::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(0, 0), DVector::zeros(0), DVector::zeros(0)).is_err());
        assert_eq!(LinearSystem::scalar(f64::NAN, 1.0, 1.0), Err(SystemError::NonFinite("A")));
    }

    #[test]
    fn registry_lookup() {
        let lam = get_registry_model("lambda-system").unwrap();
        assert_eq!(lam.system.state_names(), ["x", "z"]);
        assert_eq!(lam.system.param_names(), ["lambda", "a_tot"]);
        assert_eq!(lam.system.output().to_string(), "x + u*(a_tot - z)");
        let lti = get_registry_model("scalar-lti").unwrap();
        assert_eq!(lti.system.n_states(), 1);
        assert_eq!(lti.system.param_names(), ["a", "b", "c"]);
        assert_eq!(lti.system.output().to_string(), "c*x");
        assert_eq!(get_registry_model("nope"), Err(SystemError::UnknownModel("nope".into())));
    }

    #[test]
    fn registry_returns_copies() {
        let mut entry = get_registry_model("scalar-lti").unwrap();
        entry.default_params.insert("a".into(), 42.0);
        entry.id.push_str("-mutated");
        assert_eq!(get_registry_model("scalar-lti").unwrap().default_params["a"], 1.0);
    }

    #[test]
    fn registry_ids_unique() {
        let mut ids = registry_ids();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), MODEL_DEFS.len());
    }

    #[test]
    fn param_vector_resolution() {
        let sys = get_registry_model("lambda-system").unwrap().system;
        assert_eq!(sys.param_vector(&params(&[("a_tot", 2.0), ("lambda", 0.5)])).unwrap(), vec![0.5, 2.0]);
        assert_eq!(
            sys.param_vector(&params(&[("lambda", 0.5)])),
            Err(SystemError::UnboundParameter("a_tot".into()))
        );
        assert_eq!(
            sys.param_vector(&params(&[("lambda", 0.5), ("a_tot", 1.0), ("k", 1.0)])),
            Err(SystemError::UnknownParameter("k".into()))
        );
    }

    #[test]
    fn general_system_validation() {
        assert!(GeneralSystem::parse(&["x"], &["k"], &["-k*x", "x"], "x", None).is_err());
        assert!(GeneralSystem::parse(&["x"], &["k"], &["-k*x"], "x", Some(vec![0.0, 1.0])).is_err());
        assert!(GeneralSystem::parse(&["x"], &["k"], &["-k*q"], "x", None).is_err());
        let sys = GeneralSystem::parse(&["x"], &["k"], &["-k*x"], "x", Some(vec![1.0])).unwrap();
        assert_eq!(sys.x0(), [1.0]);
    }

    #[test]
    fn linear_embedding_structure() {
        let sys = LinearSystem::from_rows(&[vec![-1.0, 0.5], vec![0.0, -2.0]], &[1.0, 0.0], &[0.0, 3.0]).unwrap();
        let g = sys.to_general();
        assert_eq!(g.state_names(), ["x1", "x2"]);
        assert_eq!(g.n_params(), 0);
        assert_eq!(g.rhs()[1].to_string(), "(-2.0)*x2");
        assert_eq!(g.output().to_string(), "3.0*x2");
    }
}
