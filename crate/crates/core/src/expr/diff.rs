use super::{add, constant, div, exp, mul, neg, pow, sub, Expr, Var};

pub(super) fn differentiate(e: &Expr, var: Var) -> Expr {
    match e {
        Expr::Const(_) | Expr::Input | Expr::Time => constant(0.0),
        Expr::State(s) => constant(if var == Var::State(s.index) { 1.0 } else { 0.0 }),
        Expr::Param(s) => constant(if var == Var::Param(s.index) { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(differentiate(a, var)),
        Expr::Add(a, b) => add(differentiate(a, var), differentiate(b, var)),
        Expr::Sub(a, b) => sub(differentiate(a, var), differentiate(b, var)),
        Expr::Mul(a, b) => add(
            mul(differentiate(a, var), b.simplify()),
            mul(a.simplify(), differentiate(b, var)),
        ),
        Expr::Div(a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            if db.is_zero() {
                div(da, b.simplify())
            } else {
                div(
                    sub(mul(da, b.simplify()), mul(a.simplify(), db)),
                    pow(b.simplify(), 2),
                )
            }
        }
        Expr::Pow(a, n) => match n {
            0 => constant(0.0),
            _ => mul(
                mul(constant(*n as f64), pow(a.simplify(), n - 1)),
                differentiate(a, var),
            ),
        },
        Expr::Exp(a) => mul(exp(a.simplify()), differentiate(a, var)),
        Expr::Ln(a) => div(differentiate(a, var), a.simplify()),
    }
}
