//! Multiprecision reference evaluation, the oracle for every soundness test.

use rug::Float;

use super::{DomainError, Env};
use crate::expr::{BinaryOp, RealExpr, UnaryOp};

/// Working precision of the reference evaluator.
pub const REF_PREC: u32 = 256;

pub type BigReal = Float;

/// Evaluates `e` at `point` in `REF_PREC`-bit arithmetic.
pub fn reference_eval(e: &RealExpr, point: &Env<BigReal>) -> Result<BigReal, DomainError> {
    Ok(match e {
        RealExpr::Const(c) => c.to_float(REF_PREC),
        RealExpr::Var(v) => point
            .get(v)
            .map(|x| Float::with_val(REF_PREC, x))
            .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?,
        RealExpr::Unary(op, a) => {
            let x = reference_eval(a, point)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sqrt => {
                    if x < 0 {
                        return Err(DomainError::new("sqrt of a negative value"));
                    }
                    x.sqrt()
                }
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Tan => x.tan(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => {
                    if x <= 0 {
                        return Err(DomainError::new("log of a nonpositive value"));
                    }
                    x.ln()
                }
            }
        }
        RealExpr::Binary(op, l, r) => {
            let a = reference_eval(l, point)?;
            let b = reference_eval(r, point)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0 {
                        return Err(DomainError::new("division by zero"));
                    }
                    a / b
                }
            }
        }
    })
}

/// Convenience wrapper taking binary64 inputs.
pub fn reference_eval_f64(e: &RealExpr, point: &Env<f64>) -> Result<BigReal, DomainError> {
    let big = point
        .iter()
        .map(|(k, v)| (k.clone(), Float::with_val(REF_PREC, *v)))
        .collect();
    reference_eval(e, &big)
}

/// |a - b| as a binary64 rounded upward.
pub fn abs_diff_up(a: &BigReal, b: f64) -> f64 {
    Float::with_val(REF_PREC, a - b)
        .abs()
        .to_f64_round(rug::float::Round::Up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::env;

    #[test]
    fn known_constants() {
        let sin0 = RealExpr::unary(UnaryOp::Sin, RealExpr::literal("0"));
        assert_eq!(reference_eval(&sin0, &Env::new()).unwrap(), 0);
        let e = reference_eval(
            &RealExpr::unary(UnaryOp::Exp, RealExpr::literal("1")),
            &Env::new(),
        )
        .unwrap();
        let digits = "2.71828182845904523536028747135266249775724709369995";
        let expected = Float::with_val(REF_PREC, Float::parse(digits).unwrap());
        assert!(Float::with_val(REF_PREC, &e - &expected).abs() < Float::with_val(64, 1e-45));
    }

    #[test]
    fn forward_kinematics_agrees_with_direct_formula() {
        let t = || RealExpr::var("t");
        let e = RealExpr::add(
            RealExpr::mul(RealExpr::literal("0.5"), RealExpr::unary(UnaryOp::Sin, t())),
            RealExpr::mul(
                RealExpr::literal("2.5"),
                RealExpr::unary(UnaryOp::Sin, RealExpr::add(t(), t())),
            ),
        );
        let v = reference_eval_f64(&e, &env([("t", 1.0)])).unwrap();
        // Second route: assemble with a different precision and operation order.
        let p = 400;
        let s1 = Float::with_val(p, 1).sin();
        let s2 = Float::with_val(p, 2).sin();
        let direct = Float::with_val(p, &s2 * 5u32) / 2u32 + Float::with_val(p, s1 / 2u32);
        assert!(Float::with_val(p, &direct - &v).abs() < Float::with_val(64, 1e-70));
    }
}
