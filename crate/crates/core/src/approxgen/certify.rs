//! Certified bounds on |f(x) - p(x)| for one polynomial piece, counting both
//! the approximation itself and its binary64 Horner evaluation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::analysis::{expression_roundoff, AnalysisError};
use crate::expr::RealExpr;
use crate::format::FloatFormat;
use crate::frontend::PLACEHOLDER;
use crate::numerics::rounding::{add_up, mul_up, sub_down, sub_up};
use crate::numerics::{interval_eval, DomainError, Env, Interval};

use super::horner_expr;
use super::series::{taylor, Coef, MpInterval};

/// Stop refining once the upper bound is within this factor of the lower one.
const TIGHTNESS: f64 = 1.01;
/// Give up when the upper bound is still above this factor of the lower one.
const MAX_RATIO: f64 = 2.0;
const MAX_NODES: usize = 3000;
/// Absolute slack relative to max |f|, below which the two bounds are
/// considered equal.
const FLOOR: f64 = 5.421010862427522e-20; // 2^-64
const EVAL_BOXES: usize = 8;

#[derive(Debug, Clone, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("method error bound {upper:e} stays above twice the sampled {lower:e}")]
    TooWide { upper: f64, lower: f64 },
    #[error("timed out")]
    Timeout,
}

impl From<AnalysisError> for CertifyError {
    fn from(e: AnalysisError) -> Self {
        CertifyError::Domain(DomainError::new(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub method: f64,
    pub evaluation: f64,
}

impl Certificate {
    pub fn total(&self) -> f64 {
        add_up(self.method, self.evaluation)
    }
}

struct Node {
    upper: f64,
    dom: Interval,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .total_cmp(&other.upper)
            .then_with(|| other.dom.lo.total_cmp(&self.dom.lo))
    }
}

struct Piece<'a> {
    f: &'a RealExpr,
    coeffs: &'a [f64],
    center: f64,
    /// Expansion order; the remainder uses the next coefficient.
    order: usize,
}

impl Piece<'_> {
    /// Upper bound of |f - p| over `dom` and the exact-ish error at its
    /// midpoint, which is a valid lower bound of the sup.
    fn bound(&self, dom: Interval) -> Result<(f64, f64), DomainError> {
        let m = dom.mid();
        let at = MpInterval::exact(m);
        let mut d = taylor(self.f, PLACEHOLDER, &at, self.order)?;
        let tau = at.sub(&MpInterval::exact(self.center));
        let shifted = super::series::taylor_shift(self.coeffs, &tau);
        for (dk, bk) in d.iter_mut().zip(&shifted) {
            *dk = dk.sub(bk);
        }
        let lower = d[0].to_interval().mig();
        if dom.lo == dom.hi {
            return Ok((d[0].to_interval().mag(), lower));
        }
        let s = Interval::new(sub_down(dom.lo, m), sub_up(dom.hi, m));
        let mut acc = d.last().unwrap().to_interval();
        for dk in d.iter().rev().skip(1) {
            acc = acc.mul(&s).add(&dk.to_interval());
        }
        let remainder = match taylor(self.f, PLACEHOLDER, &dom, self.order + 1) {
            Ok(wide) => {
                let h = s.mag();
                let mut r = wide[self.order + 1].mag();
                for _ in 0..=self.order {
                    r = mul_up(r, h);
                }
                r
            }
            Err(_) => f64::INFINITY,
        };
        let upper = add_up(acc.mag(), remainder);
        Ok((if upper.is_nan() { f64::INFINITY } else { upper }, lower))
    }
}

/// Rigorous bound on sup |f(x) - p(x - center)| over `dom`, where the
/// polynomial is evaluated exactly. `seed_lower` is any known lower bound
/// of the sup, such as the error sampled during fitting.
pub fn method_error(
    f: &RealExpr,
    coeffs: &[f64],
    center: f64,
    dom: Interval,
    seed_lower: f64,
    deadline: Option<Instant>,
) -> Result<f64, CertifyError> {
    let piece = Piece {
        f,
        coeffs,
        center,
        order: coeffs.len(),
    };
    let mut env = Env::new();
    env.insert(PLACEHOLDER.into(), dom);
    let scale = interval_eval(f, &env)?.mag();
    let floor = mul_up(scale, FLOOR);

    let mut lower = seed_lower;
    let mut heap = BinaryHeap::new();
    for part in dom.subdivide(2 * (coeffs.len() + 1)) {
        let (u, l) = piece.bound(part)?;
        lower = lower.max(l);
        heap.push(Node {
            upper: u,
            dom: part,
        });
    }
    let mut nodes = heap.len();
    loop {
        let top = heap.peek().expect("at least one node");
        if top.upper <= TIGHTNESS * lower + floor || nodes >= MAX_NODES {
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(CertifyError::Timeout);
        }
        let m = top.dom.mid();
        if m <= top.dom.lo || m >= top.dom.hi {
            break;
        }
        let node = heap.pop().unwrap();
        for half in [Interval::new(node.dom.lo, m), Interval::new(m, node.dom.hi)] {
            let (u, l) = piece.bound(half)?;
            lower = lower.max(l);
            heap.push(Node {
                upper: u.min(node.upper),
                dom: half,
            });
        }
        nodes += 2;
    }
    let upper = heap.peek().unwrap().upper.max(lower);
    if !(upper <= MAX_RATIO * lower + floor) {
        return Err(CertifyError::TooWide { upper, lower });
    }
    Ok(upper)
}

/// Bound on |p(x - center) - HornerFloat(x)| over `dom`.
pub fn evaluation_error(coeffs: &[f64], center: f64, dom: Interval) -> Result<f64, CertifyError> {
    let e = horner_expr(coeffs, center);
    let mut worst: f64 = 0.0;
    for part in dom.subdivide(EVAL_BOXES) {
        let mut env = Env::new();
        env.insert(PLACEHOLDER.into(), part);
        let (_, err) = expression_roundoff(&e, &env, FloatFormat::Binary64)?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Certifies one piece: method error plus evaluation error.
pub fn certify(
    f: &RealExpr,
    coeffs: &[f64],
    center: f64,
    dom: Interval,
    seed_lower: f64,
    deadline: Option<Instant>,
) -> Result<Certificate, CertifyError> {
    let method = method_error(f, coeffs, center, dom, seed_lower, deadline)?;
    let evaluation = evaluation_error(coeffs, center, dom)?;
    Ok(Certificate { method, evaluation })
}
