//! Affine arithmetic with explicit accounting of the form's own rounding.
//!
//! A form `c + Σ aᵢεᵢ + s·ε₀` denotes every value obtained by choosing each
//! εᵢ in [-1, 1]. Symbols are shared between forms, which is what lets
//! `x - x` collapse to zero. The anonymous ε₀ term (the rounding slack) is
//! never shared.

use std::collections::HashMap;

use super::interval::Interval;
use super::rounding::*;
use super::{apply_binary, apply_unary, unary_derivative, DomainError, Env};
use crate::expr::{BinaryOp, RealExpr, UnaryOp};

const TINY: f64 = 1.0e-290;
/// Covers the rounding error of any product or sum below `TINY`.
const TINY_ERR: f64 = 1.0e-290 * f64::EPSILON;

/// Deterministic source of fresh noise-symbol ids.
#[derive(Debug, Default, Clone)]
pub struct NoiseGen {
    next: u32,
}

impl NoiseGen {
    pub fn new() -> NoiseGen {
        NoiseGen { next: 1 }
    }

    pub fn fresh(&mut self) -> u32 {
        self.next += 1;
        self.next
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub center: f64,
    /// Sorted by symbol id, no zero coefficients.
    pub terms: Vec<(u32, f64)>,
    pub rounding_slack: f64,
}

/// Exact rounding error of `k * a` (rounded to nearest), bounded above.
fn mul_err(k: f64, a: f64, p: f64) -> f64 {
    if k == 0.0 || a == 0.0 {
        0.0
    } else if p.abs() < TINY {
        TINY_ERR
    } else {
        k.mul_add(a, -p).abs()
    }
}

fn sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    ((a - (s - bb)) + (b - bb)).abs()
}

/// `ka*a + kb*b` rounded to nearest, plus an upper bound on its error.
fn comb(ka: f64, a: f64, kb: f64, b: f64) -> (f64, f64) {
    let p1 = ka * a;
    let p2 = kb * b;
    let s = p1 + p2;
    let err = sum_up([mul_err(ka, a, p1), mul_err(kb, b, p2), sum_err(p1, p2, s)]);
    (s, err)
}

impl AffineForm {
    pub fn zero() -> AffineForm {
        AffineForm::constant(0.0)
    }

    pub fn constant(c: f64) -> AffineForm {
        AffineForm {
            center: c,
            terms: Vec::new(),
            rounding_slack: 0.0,
        }
    }

    /// `c + r·ε` for a fresh ε.
    pub fn with_fresh(c: f64, r: f64, gen: &mut NoiseGen) -> AffineForm {
        let mut f = AffineForm::constant(c);
        f.add_fresh(r, gen);
        f
    }

    /// A form whose range is exactly the interval, on one fresh symbol.
    pub fn from_interval(iv: &Interval, gen: &mut NoiseGen) -> AffineForm {
        let c = iv.mid();
        AffineForm::with_fresh(c, iv.radius_about(c), gen)
    }

    /// Adds `r·ε` for a fresh symbol (no-op if r = 0).
    pub fn add_fresh(&mut self, r: f64, gen: &mut NoiseGen) {
        debug_assert!(r >= 0.0);
        if r > 0.0 {
            self.terms.push((gen.fresh(), r));
        }
    }

    /// Upper bound on the total deviation from the center.
    pub fn radius(&self) -> f64 {
        add_up(
            sum_up(self.terms.iter().map(|t| t.1.abs())),
            self.rounding_slack,
        )
    }

    pub fn to_interval(&self) -> Interval {
        let r = self.radius();
        Interval::new(sub_down(self.center, r), add_up(self.center, r))
    }

    /// Upper bound on the largest absolute value in the form.
    pub fn max_abs(&self) -> f64 {
        add_up(self.center.abs(), self.radius())
    }

    /// `ka*self + kb*other`.
    pub fn lin(&self, ka: f64, other: &AffineForm, kb: f64) -> AffineForm {
        let (center, mut err) = comb(ka, self.center, kb, other.center);
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let (id, a, b) = match (self.terms.get(i), other.terms.get(j)) {
                (Some(&(ia, a)), Some(&(ib, b))) if ia == ib => {
                    i += 1;
                    j += 1;
                    (ia, a, b)
                }
                (Some(&(ia, a)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    (ia, a, 0.0)
                }
                (Some(&(ia, a)), None) => {
                    i += 1;
                    (ia, a, 0.0)
                }
                (_, Some(&(ib, b))) => {
                    j += 1;
                    (ib, 0.0, b)
                }
                (None, None) => unreachable!(),
            };
            let (v, e) = comb(ka, a, kb, b);
            err = add_up(err, e);
            if v != 0.0 {
                terms.push((id, v));
            }
        }
        let slack = sum_up([
            mul_up(ka.abs(), self.rounding_slack),
            mul_up(kb.abs(), other.rounding_slack),
            err,
        ]);
        AffineForm {
            center,
            terms,
            rounding_slack: slack,
        }
    }

    pub fn add(&self, o: &AffineForm) -> AffineForm {
        self.lin(1.0, o, 1.0)
    }

    pub fn sub(&self, o: &AffineForm) -> AffineForm {
        self.lin(1.0, o, -1.0)
    }

    pub fn neg(&self) -> AffineForm {
        AffineForm {
            center: -self.center,
            terms: self.terms.iter().map(|&(i, a)| (i, -a)).collect(),
            rounding_slack: self.rounding_slack,
        }
    }

    pub fn scale(&self, k: f64) -> AffineForm {
        self.lin(k, &AffineForm::zero(), 0.0)
    }

    pub fn add_const(&self, k: f64) -> AffineForm {
        self.add(&AffineForm::constant(k))
    }

    /// Product; the quadratic remainder goes to a fresh symbol.
    pub fn mul(&self, o: &AffineForm, gen: &mut NoiseGen) -> AffineForm {
        if self == o {
            return self.sqr(gen);
        }
        let (c, e0) = (
            self.center * o.center,
            mul_err(self.center, o.center, self.center * o.center),
        );
        // Linear part c_x·(y - c_y) + c_y·(x - c_x) over the named symbols.
        let dx = AffineForm {
            center: 0.0,
            terms: self.terms.clone(),
            rounding_slack: 0.0,
        };
        let dy = AffineForm {
            center: 0.0,
            terms: o.terms.clone(),
            rounding_slack: 0.0,
        };
        let mut out = dy.lin(self.center, &dx, o.center);
        out.center = c;
        out.rounding_slack = sum_up([
            out.rounding_slack,
            e0,
            mul_up(self.center.abs(), o.rounding_slack),
            mul_up(o.center.abs(), self.rounding_slack),
        ]);
        out.add_fresh(mul_up(self.radius(), o.radius()), gen);
        out
    }

    /// Square; the remainder d² ∈ [0, r²] is centered before folding.
    pub fn sqr(&self, gen: &mut NoiseGen) -> AffineForm {
        let d = AffineForm {
            center: 0.0,
            terms: self.terms.clone(),
            rounding_slack: 0.0,
        };
        let mut out = d.scale(2.0 * self.center);
        let (c2, e0) = (
            self.center * self.center,
            mul_err(self.center, self.center, self.center * self.center),
        );
        let r = self.radius();
        let r2 = mul_up(r, r);
        let half = mul_up(r2, 0.5);
        let (c, e1) = (c2 + half, sum_err(c2, half, c2 + half));
        out.center = c;
        out.rounding_slack = sum_up([
            out.rounding_slack,
            e0,
            e1,
            mul_up(mul_up(2.0, self.center.abs()), self.rounding_slack),
        ]);
        out.add_fresh(half, gen);
        out
    }

    /// Applies a smooth unary function using a secant-slope linearization;
    /// falls back to the interval image when the remainder dominates.
    pub fn unary(&self, op: UnaryOp, gen: &mut NoiseGen) -> Result<AffineForm, DomainError> {
        if op == UnaryOp::Neg {
            return Ok(self.neg());
        }
        let x = self.to_interval();
        let image = apply_unary(op, &x)?;
        let f = |iv: &Interval| apply_unary(op, iv);
        let df = |iv: &Interval| unary_derivative(op, iv);
        Ok(self.linearize(&x, &image, f, df, gen))
    }

    pub fn recip(&self, gen: &mut NoiseGen) -> Result<AffineForm, DomainError> {
        let x = self.to_interval();
        let image = x.recip()?;
        let f = |iv: &Interval| iv.recip();
        let df = |iv: &Interval| Ok(iv.sqr().recip()?.neg());
        Ok(self.linearize(&x, &image, f, df, gen))
    }

    pub fn div(&self, o: &AffineForm, gen: &mut NoiseGen) -> Result<AffineForm, DomainError> {
        Ok(self.mul(&o.recip(gen)?, gen))
    }

    fn linearize(
        &self,
        x: &Interval,
        image: &Interval,
        f: impl Fn(&Interval) -> Result<Interval, DomainError>,
        df: impl Fn(&Interval) -> Result<Interval, DomainError>,
        gen: &mut NoiseGen,
    ) -> AffineForm {
        let fallback = |gen: &mut NoiseGen| AffineForm::from_interval(image, gen);
        if x.lo == x.hi {
            return fallback(gen);
        }
        let (Ok(fl), Ok(fu)) = (f(&Interval::point(x.lo)), f(&Interval::point(x.hi))) else {
            return fallback(gen);
        };
        let alpha = (fu.mid() - fl.mid()) / (x.hi - x.lo);
        if !alpha.is_finite() {
            return fallback(gen);
        }
        // Range of r(t) = f(t) - alpha·t by a mean-value form per piece.
        let a = Interval::point(alpha);
        let mut resid: Option<Interval> = None;
        for piece in x.subdivide(8) {
            let m = piece.mid();
            let (Ok(fm), Ok(dp)) = (f(&Interval::point(m)), df(&piece)) else {
                return fallback(gen);
            };
            let rm = fm.sub(&Interval::point(m).mul(&a));
            let slope = dp.sub(&a);
            let dev = piece.sub(&Interval::point(m));
            let r = rm.add(&slope.mul(&dev));
            resid = Some(match resid {
                Some(acc) => acc.hull(&r),
                None => r,
            });
        }
        let resid = resid.expect("at least one piece");
        if !resid.is_finite() {
            return fallback(gen);
        }
        let zeta = resid.mid();
        let delta = resid.radius_about(zeta);
        // The linear part only pays off while the remainder is smaller than
        // the whole image.
        if delta >= image.radius_about(image.mid()) {
            return fallback(gen);
        }
        let mut out = self.lin(alpha, &AffineForm::constant(zeta), 1.0);
        out.add_fresh(delta, gen);
        out
    }
}

/// Affine evaluation of `e`; structurally equal subtrees evaluate to the same
/// form, so correlations between repeated subexpressions are kept.
pub fn affine_eval(
    e: &RealExpr,
    env: &Env<AffineForm>,
    gen: &mut NoiseGen,
) -> Result<AffineForm, DomainError> {
    let mut memo = HashMap::new();
    eval_memo(e, env, gen, &mut memo)
}

fn eval_memo(
    e: &RealExpr,
    env: &Env<AffineForm>,
    gen: &mut NoiseGen,
    memo: &mut HashMap<RealExpr, AffineForm>,
) -> Result<AffineForm, DomainError> {
    if let Some(f) = memo.get(e) {
        return Ok(f.clone());
    }
    let out = match e {
        RealExpr::Const(c) => {
            if c.is_exact_f64() {
                AffineForm::constant(c.value())
            } else {
                AffineForm::with_fresh(c.value(), c.representation_error(false), gen)
            }
        }
        RealExpr::Var(v) => env
            .get(v)
            .cloned()
            .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?,
        RealExpr::Unary(op, a) => eval_memo(a, env, gen, memo)?.unary(*op, gen)?,
        RealExpr::Binary(op, l, r) => {
            let a = eval_memo(l, env, gen, memo)?;
            let b = eval_memo(r, env, gen, memo)?;
            match op {
                BinaryOp::Add => a.add(&b),
                BinaryOp::Sub => a.sub(&b),
                BinaryOp::Mul => a.mul(&b, gen),
                BinaryOp::Div => {
                    // Reject exactly what interval division rejects.
                    apply_binary(BinaryOp::Div, &a.to_interval(), &b.to_interval())?;
                    a.div(&b, gen)?
                }
            }
        }
    };
    if !out.to_interval().is_finite() {
        return Err(DomainError::new(format!(
            "affine range of `{e}` is not finite"
        )));
    }
    memo.insert(e.clone(), out.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::env;

    fn unit(gen: &mut NoiseGen) -> Env<AffineForm> {
        env([(
            "x",
            AffineForm::from_interval(&Interval::new(-1.0, 1.0), gen),
        )])
    }

    #[test]
    fn self_subtraction_cancels() {
        let mut gen = NoiseGen::new();
        let env = unit(&mut gen);
        let x = RealExpr::var("x");
        let r = affine_eval(&RealExpr::sub(x.clone(), x), &env, &mut gen).unwrap();
        assert!(r.terms.is_empty());
        assert_eq!(r.to_interval(), Interval::point(0.0));
    }

    #[test]
    fn square_contains_true_range() {
        let mut gen = NoiseGen::new();
        let env = unit(&mut gen);
        let x = RealExpr::var("x");
        let r = affine_eval(&RealExpr::mul(x.clone(), x), &env, &mut gen)
            .unwrap()
            .to_interval();
        assert!(r.lo <= 0.0 && r.hi >= 1.0 && r.lo >= -1.0 && r.hi <= 1.0 + 1e-15);
    }

    #[test]
    fn sine_linearization_encloses_samples() {
        let mut gen = NoiseGen::new();
        let x = AffineForm::from_interval(&Interval::new(0.2, 0.9), &mut gen);
        let s = x.unary(UnaryOp::Sin, &mut gen).unwrap();
        let hull = s.to_interval();
        for i in 0..=1000 {
            let t = 0.2 + 0.7 * i as f64 / 1000.0;
            assert!(hull.contains(t.sin()));
        }
        // Correlated with x plus one remainder symbol.
        assert!(s.terms.len() == 2);
    }
}
