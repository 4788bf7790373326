//! Strict IEEE-754 evaluation in binary64 or binary32, round-to-nearest at
//! every operation, elementary calls delegated to the platform library.

use super::{DomainError, Env};
use crate::expr::{BinaryOp, RealExpr, UnaryOp};
use crate::format::FloatFormat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("overflow to infinity in `{0}`")]
    Overflow(String),
}

/// Platform libm in binary64.
pub fn libm64(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
    }
}

/// Platform libm in binary32 (`sinf` and friends).
pub fn libm32(op: UnaryOp, x: f32) -> f32 {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
    }
}

pub fn check_unary_domain(op: UnaryOp, x: f64) -> Result<(), DomainError> {
    match op {
        UnaryOp::Sqrt if x < 0.0 => Err(DomainError::new("sqrt of a negative value")),
        UnaryOp::Log if x <= 0.0 => Err(DomainError::new("log of a nonpositive value")),
        _ => Ok(()),
    }
}

/// Binary64 evaluation of `e` at `point`.
pub fn f64_eval(e: &RealExpr, point: &Env<f64>) -> Result<f64, EvalError> {
    let v = match e {
        RealExpr::Const(c) => c.value(),
        RealExpr::Var(v) => *point
            .get(v)
            .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?,
        RealExpr::Unary(op, a) => {
            let x = f64_eval(a, point)?;
            check_unary_domain(*op, x)?;
            libm64(*op, x)
        }
        RealExpr::Binary(op, l, r) => {
            let a = f64_eval(l, point)?;
            let b = f64_eval(r, point)?;
            binary64(*op, a, b)?
        }
    };
    if !v.is_finite() {
        return Err(EvalError::Overflow(e.to_string()));
    }
    Ok(v)
}

/// Binary32 evaluation; inputs are binary32 values carried in binary64.
pub fn f32_eval(e: &RealExpr, point: &Env<f64>) -> Result<f32, EvalError> {
    let v = match e {
        RealExpr::Const(c) => c.value32(),
        RealExpr::Var(v) => *point
            .get(v)
            .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?
            as f32,
        RealExpr::Unary(op, a) => {
            let x = f32_eval(a, point)?;
            check_unary_domain(*op, x as f64)?;
            libm32(*op, x)
        }
        RealExpr::Binary(op, l, r) => {
            let a = f32_eval(l, point)?;
            let b = f32_eval(r, point)?;
            binary32(*op, a, b)?
        }
    };
    if !v.is_finite() {
        return Err(EvalError::Overflow(e.to_string()));
    }
    Ok(v)
}

/// Evaluates in the given format, returning the result widened to binary64.
pub fn eval_in(fmt: FloatFormat, e: &RealExpr, point: &Env<f64>) -> Result<f64, EvalError> {
    match fmt {
        FloatFormat::Binary64 => f64_eval(e, point),
        FloatFormat::Binary32 => f32_eval(e, point).map(f64::from),
    }
}

pub fn binary64(op: BinaryOp, a: f64, b: f64) -> Result<f64, DomainError> {
    Ok(match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(DomainError::new("division by zero"));
            }
            a / b
        }
    })
}

pub fn binary32(op: BinaryOp, a: f32, b: f32) -> Result<f32, DomainError> {
    Ok(match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(DomainError::new("division by zero"));
            }
            a / b
        }
    })
}

/// Horner evaluation `c0 + t*(c1 + t*(c2 + ...))` with unfused operations.
pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    let mut acc = match coeffs.last() {
        Some(&c) => c,
        None => return 0.0,
    };
    for &c in coeffs.iter().rev().skip(1) {
        acc = c + t * acc;
    }
    acc
}
