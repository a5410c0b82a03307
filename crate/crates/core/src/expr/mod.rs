//! Scalar expressions for model right-hand sides and outputs.
//!
//! An [`Expr`] is a small immutable tree over constants, state variables,
//! parameters, the input `u` and time `t`. Trees are built by [`parse`],
//! evaluated against an [`Env`], and differentiated symbolically with
//! [`Expr::diff`]. The builder functions in this module fold constants and
//! drop additive/multiplicative identities so derivatives stay readable.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := signed (('+' | '-') signed)*
//! signed  := '-' signed | term
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' INTEGER)*
//! primary := NUMBER | IDENT | ('exp' | 'ln') '(' expr ')' | '(' expr ')'
//! ```
//!
//! A leading minus applies to the whole product that follows it, so
//! `-a*x` is `Neg(Mul(a, x))`, while `^` binds tighter than any minus.

mod diff;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use parser::parse;

/// Names reserved for the input signal and time.
pub const INPUT_NAME: &str = "u";
pub const TIME_NAME: &str = "t";
const RESERVED: [&str; 4] = [INPUT_NAME, TIME_NAME, "exp", "ln"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("exponent at offset {offset} must be a nonnegative integer literal")]
    BadExponent { offset: usize },
    #[error("name `{0}` is declared more than once")]
    DuplicateName(String),
    #[error("name `{0}` is reserved")]
    ReservedName(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of nonpositive value {0}")]
    LnDomain(f64),
    #[error("unbound name `{0}`")]
    Unbound(String),
}

/// A named variable together with its slot in the state or parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub name: String,
    pub index: usize,
}

/// Variable with respect to which an expression is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    State(usize),
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(Symbol),
    Param(Symbol),
    Input,
    Time,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
}

/// Declared state and parameter names; resolves identifiers during parsing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scope {
    states: Vec<String>,
    params: Vec<String>,
}

impl Scope {
    pub fn new<S: AsRef<str>, P: AsRef<str>>(states: &[S], params: &[P]) -> Result<Self, ExprError> {
        let states: Vec<String> = states.iter().map(|s| s.as_ref().to_string()).collect();
        let params: Vec<String> = params.iter().map(|s| s.as_ref().to_string()).collect();
        let mut seen = std::collections::HashSet::new();
        for name in states.iter().chain(params.iter()) {
            if RESERVED.contains(&name.as_str()) {
                return Err(ExprError::ReservedName(name.clone()));
            }
            if !is_identifier(name) {
                return Err(ExprError::Syntax {
                    offset: 0,
                    message: format!("`{name}` is not a valid identifier"),
                });
            }
            if !seen.insert(name.as_str()) {
                return Err(ExprError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { states, params })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        if let Some(i) = self.states.iter().position(|s| s == name) {
            return Some(Var::State(i));
        }
        self.params.iter().position(|s| s == name).map(Var::Param)
    }

    fn resolve(&self, name: &str) -> Option<Expr> {
        self.var(name).map(|v| match v {
            Var::State(index) => Expr::State(Symbol { name: name.to_string(), index }),
            Var::Param(index) => Expr::Param(Symbol { name: name.to_string(), index }),
        })
    }
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Values bound to an expression's leaves at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub states: &'a [f64],
    pub params: &'a [f64],
    pub input: f64,
    pub time: f64,
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::State(s) => *env
                .states
                .get(s.index)
                .ok_or_else(|| ExprError::Unbound(s.name.clone()))?,
            Expr::Param(s) => *env
                .params
                .get(s.index)
                .ok_or_else(|| ExprError::Unbound(s.name.clone()))?,
            Expr::Input => env.input,
            Expr::Time => env.time,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, n) => powi(a.eval(env)?, *n),
            Expr::Exp(a) => a.eval(env)?.exp(),
            Expr::Ln(a) => {
                let v = a.eval(env)?;
                if v <= 0.0 {
                    return Err(ExprError::LnDomain(v));
                }
                v.ln()
            }
        })
    }

    /// Evaluates with variables looked up by name instead of by slot.
    pub fn eval_named(&self, values: &BTreeMap<String, f64>, input: f64, time: f64) -> Result<f64, ExprError> {
        let lookup = |s: &Symbol| values.get(&s.name).copied().ok_or_else(|| ExprError::Unbound(s.name.clone()));
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::State(s) | Expr::Param(s) => lookup(s)?,
            Expr::Input => input,
            Expr::Time => time,
            Expr::Neg(a) => -a.eval_named(values, input, time)?,
            Expr::Add(a, b) => a.eval_named(values, input, time)? + b.eval_named(values, input, time)?,
            Expr::Sub(a, b) => a.eval_named(values, input, time)? - b.eval_named(values, input, time)?,
            Expr::Mul(a, b) => a.eval_named(values, input, time)? * b.eval_named(values, input, time)?,
            Expr::Div(a, b) => {
                let num = a.eval_named(values, input, time)?;
                let den = b.eval_named(values, input, time)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, n) => powi(a.eval_named(values, input, time)?, *n),
            Expr::Exp(a) => a.eval_named(values, input, time)?.exp(),
            Expr::Ln(a) => {
                let v = a.eval_named(values, input, time)?;
                if v <= 0.0 {
                    return Err(ExprError::LnDomain(v));
                }
                v.ln()
            }
        })
    }

    /// Partial derivative with respect to `var`, simplified by constant folding.
    pub fn diff(&self, var: Var) -> Expr {
        diff::differentiate(self, var)
    }

    /// Rebuilds the tree through the folding constructors.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::State(_) | Expr::Param(_) | Expr::Input | Expr::Time => self.clone(),
            Expr::Neg(a) => neg(a.simplify()),
            Expr::Add(a, b) => add(a.simplify(), b.simplify()),
            Expr::Sub(a, b) => sub(a.simplify(), b.simplify()),
            Expr::Mul(a, b) => mul(a.simplify(), b.simplify()),
            Expr::Div(a, b) => div(a.simplify(), b.simplify()),
            Expr::Pow(a, n) => pow(a.simplify(), *n),
            Expr::Exp(a) => exp(a.simplify()),
            Expr::Ln(a) => ln(a.simplify()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// True when the tree mentions the given variable.
    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::State(s) => var == Var::State(s.index),
            Expr::Param(s) => var == Var::Param(s.index),
            Expr::Const(_) | Expr::Input | Expr::Time => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::State(_) | Expr::Param(_) | Expr::Input | Expr::Time => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) => 1 + a.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Neg(_) => 2,
            Expr::Mul(..) | Expr::Div(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if c.is_sign_negative() => 2,
            _ => 5,
        }
    }
}

fn powi(base: f64, n: u32) -> f64 {
    match i32::try_from(n) {
        Ok(n) => base.powi(n),
        Err(_) => base.powf(n as f64),
    }
}

// Folding constructors. Constant folding only happens when the folded value
// equals what evaluation would produce.

pub fn constant(c: f64) -> Expr {
    Expr::Const(c)
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::Const(0.0),
        _ if a.is_one() => b,
        _ if b.is_one() => a,
        (Expr::Const(c), _) if *c == -1.0 => neg(b),
        (_, Expr::Const(c)) if *c == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => Expr::Const(x / y),
        _ if b.is_one() => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, n: u32) -> Expr {
    match (&a, n) {
        (Expr::Const(x), _) => Expr::Const(powi(*x, n)),
        (_, 0) => Expr::Const(1.0),
        (_, 1) => a,
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub fn exp(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(x.exp()),
        other => Expr::Exp(Box::new(other)),
    }
}

pub fn ln(a: Expr) -> Expr {
    match a {
        Expr::Const(x) if x > 0.0 => Expr::Const(x.ln()),
        other => Expr::Ln(Box::new(other)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

fn write_child(child: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if child.precedence() < min_prec {
        write!(f, "(")?;
        write_expr(child, f)?;
        write!(f, ")")
    } else {
        write_expr(child, f)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        // `{:?}` on f64 is the shortest representation that round-trips.
        Expr::Const(c) if c.is_sign_negative() => write!(f, "-{:?}", -c),
        Expr::Const(c) => write!(f, "{c:?}"),
        Expr::State(s) | Expr::Param(s) => write!(f, "{}", s.name),
        Expr::Input => write!(f, "{INPUT_NAME}"),
        Expr::Time => write!(f, "{TIME_NAME}"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_child(a, 2, f)
        }
        Expr::Add(a, b) => {
            write_child(a, 1, f)?;
            write!(f, " + ")?;
            write_child(b, 2, f)
        }
        Expr::Sub(a, b) => {
            write_child(a, 1, f)?;
            write!(f, " - ")?;
            write_child(b, 2, f)
        }
        Expr::Mul(a, b) => {
            write_child(a, 3, f)?;
            write!(f, "*")?;
            write_child(b, 4, f)
        }
        Expr::Div(a, b) => {
            write_child(a, 3, f)?;
            write!(f, "/")?;
            write_child(b, 4, f)
        }
        Expr::Pow(a, n) => {
            write_child(a, 5, f)?;
            write!(f, "^{n}")
        }
        Expr::Exp(a) => write!(f, "exp({a})"),
        Expr::Ln(a) => write!(f, "ln({a})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> Scope {
        Scope::new(&["x", "z"], &["lambda", "a"]).unwrap()
    }

    fn eval_at(e: &Expr, states: &[f64], params: &[f64], input: f64, time: f64) -> Result<f64, ExprError> {
        e.eval(&Env { states, params, input, time })
    }

    #[test]
    fn evaluates_lambda_rhs() {
        let e = parse("-lambda*x + u^2", &scope()).unwrap();
        assert_eq!(eval_at(&e, &[2.0, 0.0], &[3.0, 0.0], 1.0, 0.0).unwrap(), -5.0);
    }

    #[test]
    fn evaluates_reporter_output_at_rest() {
        let e = parse("x + u*(a - z)", &scope()).unwrap();
        assert_eq!(eval_at(&e, &[0.0, 0.0], &[1.0, 2.0], 1.0, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn exp_of_time() {
        let e = parse("exp(t)", &scope()).unwrap();
        assert_eq!(eval_at(&e, &[], &[], 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn evaluation_errors() {
        let s = scope();
        let e = parse("x / z", &s).unwrap();
        assert_eq!(eval_at(&e, &[1.0, 0.0], &[0.0, 0.0], 0.0, 0.0), Err(ExprError::DivisionByZero));
        let e = parse("ln(x)", &s).unwrap();
        assert_eq!(eval_at(&e, &[-1.0, 0.0], &[0.0, 0.0], 0.0, 0.0), Err(ExprError::LnDomain(-1.0)));
        let e = parse("lambda", &s).unwrap();
        assert_eq!(eval_at(&e, &[], &[], 0.0, 0.0), Err(ExprError::Unbound("lambda".into())));
    }

    #[test]
    fn named_evaluation_matches_slots() {
        let e = parse("x + u*(a - z)", &scope()).unwrap();
        let values: BTreeMap<String, f64> =
            [("x", 0.5), ("z", 0.25), ("lambda", 1.0), ("a", 2.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let named = e.eval_named(&values, 1.5, 0.0).unwrap();
        let slotted = eval_at(&e, &[0.5, 0.25], &[1.0, 2.0], 1.5, 0.0).unwrap();
        assert_eq!(named, slotted);
        assert!(matches!(
            e.eval_named(&BTreeMap::new(), 0.0, 0.0),
            Err(ExprError::Unbound(_))
        ));
    }

    #[test]
    fn scope_rejects_bad_names() {
        assert_eq!(Scope::new(&["x"], &["x"]), Err(ExprError::DuplicateName("x".into())));
        assert_eq!(Scope::new(&["u"], &[] as &[&str]), Err(ExprError::ReservedName("u".into())));
        assert!(Scope::new(&["2x"], &[] as &[&str]).is_err());
    }

    #[test]
    fn printing_keeps_structure() {
        let s = scope();
        for text in ["-lambda*x + u^2", "x - (z - a)", "-(x + z)", "(x*z)^3", "x/(z*a)", "exp(-x)*ln(z)", "a*-x"] {
            let e = parse(text, &s).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed, &s).unwrap(), e, "{text} -> {printed}");
        }
    }

    #[test]
    fn folding_identities() {
        let x = parse("x", &scope()).unwrap();
        assert_eq!(add(x.clone(), constant(0.0)), x);
        assert_eq!(mul(x.clone(), constant(1.0)), x);
        assert_eq!(mul(x.clone(), constant(0.0)), constant(0.0));
        assert_eq!(mul(constant(2.0), constant(3.0)), constant(6.0));
        assert_eq!(div(constant(1.0), constant(0.0)), Expr::Div(Box::new(constant(1.0)), Box::new(constant(0.0))));
        assert_eq!(neg(neg(x.clone())), x);
    }
}
