//! Arithmetic substrates: directed rounding, intervals, affine forms, strict
//! binary64/binary32 evaluation and the multiprecision reference evaluator.

pub mod affine;
pub mod bigreal;
pub mod feval;
pub mod interval;
pub mod rounding;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use affine::{AffineForm, NoiseGen};
pub use interval::Interval;

/// Variable bindings keyed by name.
pub type Env<T> = BTreeMap<Arc<str>, T>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);

impl DomainError {
    pub fn new(msg: impl Into<String>) -> DomainError {
        DomainError(msg.into())
    }
}

/// Builds an environment from `(name, value)` pairs.
pub fn env<T>(pairs: impl IntoIterator<Item = (impl AsRef<str>, T)>) -> Env<T> {
    pairs
        .into_iter()
        .map(|(k, v)| (Arc::from(k.as_ref()), v))
        .collect()
}

pub use interval_eval::interval_eval;

mod interval_eval {
    use super::{DomainError, Env, Interval};
    use crate::expr::{BinaryOp, RealExpr, UnaryOp};

    /// Encloses the range of `e` over the box `env`.
    pub fn interval_eval(e: &RealExpr, env: &Env<Interval>) -> Result<Interval, DomainError> {
        let r = match e {
            RealExpr::Const(c) => {
                let v = c.value();
                if c.is_exact_f64() {
                    Interval::point(v)
                } else {
                    Interval::point(v).inflate(c.representation_error(false))
                }
            }
            RealExpr::Var(v) => *env
                .get(v)
                .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?,
            RealExpr::Unary(op, a) => {
                let x = interval_eval(a, env)?;
                apply_unary(*op, &x)?
            }
            RealExpr::Binary(op, l, r) => {
                // x*x is a square: keep the tighter enclosure.
                if *op == BinaryOp::Mul && l == r {
                    interval_eval(l, env)?.sqr()
                } else {
                    let a = interval_eval(l, env)?;
                    let b = interval_eval(r, env)?;
                    apply_binary(*op, &a, &b)?
                }
            }
        };
        if !r.is_finite() {
            return Err(DomainError::new(format!("range of `{e}` is not finite")));
        }
        Ok(r)
    }

    pub fn apply_unary(op: UnaryOp, x: &Interval) -> Result<Interval, DomainError> {
        Ok(match op {
            UnaryOp::Neg => x.neg(),
            UnaryOp::Sqrt => x.sqrt()?,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Tan => x.tan()?,
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.log()?,
        })
    }

    pub fn apply_binary(op: BinaryOp, a: &Interval, b: &Interval) -> Result<Interval, DomainError> {
        Ok(match op {
            BinaryOp::Add => a.add(b),
            BinaryOp::Sub => a.sub(b),
            BinaryOp::Mul => a.mul(b),
            BinaryOp::Div => a.div(b)?,
        })
    }

    /// Enclosure of the derivative of a unary operation over `x`.
    pub fn unary_derivative(op: UnaryOp, x: &Interval) -> Result<Interval, DomainError> {
        Ok(match op {
            UnaryOp::Neg => Interval::point(-1.0),
            UnaryOp::Sqrt => {
                if x.lo <= 0.0 {
                    return Err(DomainError::new("sqrt derivative unbounded at 0"));
                }
                x.sqrt()?.scale(2.0).recip()?
            }
            UnaryOp::Sin => x.cos(),
            UnaryOp::Cos => x.sin().neg(),
            UnaryOp::Tan => {
                let t = x.tan()?;
                Interval::point(1.0).add(&t.sqr())
            }
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.recip()?,
        })
    }
}

pub use interval_eval::{apply_binary, apply_unary, unary_derivative};
