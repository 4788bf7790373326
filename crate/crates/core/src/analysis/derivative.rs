//! Symbolic differentiation with light algebraic simplification.

use crate::expr::{BinaryOp, RealExpr, UnaryOp};

fn is_zero(e: &RealExpr) -> bool {
    e.as_const().is_some_and(|c| c.is_zero())
}

fn is_one(e: &RealExpr) -> bool {
    e.as_const().is_some_and(|c| c.is_one())
}

pub fn zero() -> RealExpr {
    RealExpr::constant(0.0)
}

pub fn one() -> RealExpr {
    RealExpr::constant(1.0)
}

pub fn add(a: RealExpr, b: RealExpr) -> RealExpr {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        RealExpr::add(a, b)
    }
}

pub fn sub(a: RealExpr, b: RealExpr) -> RealExpr {
    if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        RealExpr::sub(a, b)
    }
}

pub fn neg(a: RealExpr) -> RealExpr {
    match a {
        _ if is_zero(&a) => zero(),
        RealExpr::Unary(UnaryOp::Neg, inner) => *inner,
        _ => RealExpr::neg(a),
    }
}

pub fn mul(a: RealExpr, b: RealExpr) -> RealExpr {
    if is_zero(&a) || is_zero(&b) {
        zero()
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        RealExpr::mul(a, b)
    }
}

pub fn div(a: RealExpr, b: RealExpr) -> RealExpr {
    if is_zero(&a) {
        zero()
    } else if is_one(&b) {
        a
    } else {
        RealExpr::div(a, b)
    }
}

/// ∂e/∂v, treating every other variable as independent of `v`.
pub fn differentiate(e: &RealExpr, v: &str) -> RealExpr {
    match e {
        RealExpr::Const(_) => zero(),
        RealExpr::Var(n) => {
            if &**n == v {
                one()
            } else {
                zero()
            }
        }
        RealExpr::Unary(op, a) => {
            let da = differentiate(a, v);
            if is_zero(&da) {
                return zero();
            }
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => neg(da),
                UnaryOp::Sqrt => div(
                    da,
                    mul(RealExpr::constant(2.0), RealExpr::unary(UnaryOp::Sqrt, a)),
                ),
                UnaryOp::Sin => mul(RealExpr::unary(UnaryOp::Cos, a), da),
                UnaryOp::Cos => neg(mul(RealExpr::unary(UnaryOp::Sin, a), da)),
                UnaryOp::Tan => {
                    let c = RealExpr::unary(UnaryOp::Cos, a);
                    div(da, RealExpr::mul(c.clone(), c))
                }
                UnaryOp::Exp => mul(RealExpr::unary(UnaryOp::Exp, a), da),
                UnaryOp::Log => div(da, a),
            }
        }
        RealExpr::Binary(op, a, b) => {
            let da = differentiate(a, v);
            let db = differentiate(b, v);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                BinaryOp::Div => {
                    if is_zero(&db) {
                        div(da, b)
                    } else {
                        div(
                            sub(mul(da, b.clone()), mul(a, db)),
                            RealExpr::mul(b.clone(), b),
                        )
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::numerics::bigreal::{reference_eval, REF_PREC};
    use crate::numerics::env;
    use rand::{Rng, SeedableRng};
    use rug::Float;

    fn body(src: &str, vars: &str) -> RealExpr {
        let params: Vec<String> = vars.split(',').map(|v| format!("{v}: Real")).collect();
        let req: Vec<String> = vars
            .split(',')
            .map(|v| format!("-100 <= {v} && {v} <= 100"))
            .collect();
        parse_program(&format!(
            "def f({}): Real = {{ require({}) {src} }}",
            params.join(", "),
            req.join(" && ")
        ))
        .unwrap()
        .result
    }

    #[test]
    fn linear_combination() {
        let e = body("0.5 * v1 + 2.5 * v2", "v1,v2");
        assert_eq!(differentiate(&e, "v2"), RealExpr::literal("2.5"));
    }

    #[test]
    fn sine() {
        let e = body("sin(x)", "x");
        assert_eq!(differentiate(&e, "x").to_string(), "cos(x)");
    }

    /// Central differences in 256-bit arithmetic as an independent route.
    fn finite_difference(e: &RealExpr, v: &str, point: &[(&str, f64)]) -> Float {
        let h = Float::with_val(REF_PREC, 1e-30);
        let at = |delta: &Float| {
            let pt = point
                .iter()
                .map(|(n, x)| {
                    let mut f = Float::with_val(REF_PREC, *x);
                    if *n == v {
                        f += delta;
                    }
                    (std::sync::Arc::from(*n), f)
                })
                .collect();
            reference_eval(e, &pt).unwrap()
        };
        let plus = at(&h);
        let minus = at(&Float::with_val(REF_PREC, -&h));
        (plus - minus) / (h * 2u32)
    }

    #[test]
    fn quotient_agrees_with_finite_differences() {
        let e = body("(v1 + 2 * v2) / (v2 + 2 * v1)", "v1,v2");
        let d = differentiate(&e, "v1");
        // Closed form: -3 v2 / (v2 + 2 v1)^2.
        let closed = body("-3 * v2 / ((v2 + 2 * v1) * (v2 + 2 * v1))", "v1,v2");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if (b + 2.0 * a).abs() < 0.1 {
                continue;
            }
            let pt = env([
                ("v1", Float::with_val(REF_PREC, a)),
                ("v2", Float::with_val(REF_PREC, b)),
            ]);
            let sym = reference_eval(&d, &pt).unwrap();
            let fd = finite_difference(&e, "v1", &[("v1", a), ("v2", b)]);
            let cf = reference_eval(&closed, &pt).unwrap();
            let rel = |x: &Float, y: &Float| {
                Float::with_val(64, x - y).abs()
                    / Float::with_val(64, y.abs_ref()).max(&Float::with_val(64, 1e-300))
            };
            assert!(rel(&sym, &fd) < 1e-6, "{sym} vs {fd}");
            assert!(rel(&sym, &cf) < 1e-30);
        }
    }

    #[test]
    fn all_unary_rules_agree_with_finite_differences() {
        let e = body(
            "tan(x) + sqrt(x) * exp(-x) - log(x) / cos(x) + sin(x * x)",
            "x",
        );
        let d = differentiate(&e, "x");
        for x in [0.1, 0.4, 0.7, 1.1, 1.4] {
            let sym = reference_eval(&d, &env([("x", Float::with_val(REF_PREC, x))])).unwrap();
            let fd = finite_difference(&e, "x", &[("x", x)]);
            let rel = Float::with_val(64, &sym - &fd).abs() / Float::with_val(64, fd.abs_ref());
            assert!(rel < 1e-6);
        }
    }
}
