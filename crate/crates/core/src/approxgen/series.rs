//! Truncated Taylor series arithmetic over enclosures.
//!
//! Coefficients are carried either as binary64 intervals (to bound a Taylor
//! remainder over a whole box) or as high-precision MPFR intervals (for the
//! expansion at a point, where the error function cancels to many digits).

use std::collections::HashMap;

use rug::float::Round;
use rug::Float;

use crate::expr::{BinaryOp, Constant, RealExpr, UnaryOp};
use crate::numerics::{interval_eval, DomainError, Env, Interval};

/// Working precision of [`MpInterval`].
pub const MP_PREC: u32 = 128;

pub trait Coef: Clone {
    fn constant(c: &Constant) -> Self;
    fn exact(v: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, DomainError>;
    fn neg(&self) -> Self;
    fn exp(&self) -> Self;
    fn log(&self) -> Result<Self, DomainError>;
    fn sqrt(&self) -> Result<Self, DomainError>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Result<Self, DomainError>;
}

impl Coef for Interval {
    fn constant(c: &Constant) -> Self {
        interval_eval(&RealExpr::Const(c.clone()), &Env::new()).expect("constants are finite")
    }
    fn exact(v: f64) -> Self {
        Interval::point(v)
    }
    fn add(&self, o: &Self) -> Self {
        Interval::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Interval::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Interval::mul(self, o)
    }
    fn div(&self, o: &Self) -> Result<Self, DomainError> {
        Interval::div(self, o)
    }
    fn neg(&self) -> Self {
        Interval::neg(self)
    }
    fn exp(&self) -> Self {
        Interval::exp(self)
    }
    fn log(&self) -> Result<Self, DomainError> {
        Interval::log(self)
    }
    fn sqrt(&self) -> Result<Self, DomainError> {
        Interval::sqrt(self)
    }
    fn sin(&self) -> Self {
        Interval::sin(self)
    }
    fn cos(&self) -> Self {
        Interval::cos(self)
    }
    fn tan(&self) -> Result<Self, DomainError> {
        Interval::tan(self)
    }
}

/// Interval with MPFR endpoints and directed rounding. Elementary functions
/// are tight only for narrow arguments, which is all the point expansion needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MpInterval {
    pub lo: Float,
    pub hi: Float,
}

fn down<T>(v: T) -> Float
where
    Float: rug::ops::AssignRound<T, Round = Round, Ordering = std::cmp::Ordering>,
{
    Float::with_val_round(MP_PREC, v, Round::Down).0
}

fn up<T>(v: T) -> Float
where
    Float: rug::ops::AssignRound<T, Round = Round, Ordering = std::cmp::Ordering>,
{
    Float::with_val_round(MP_PREC, v, Round::Up).0
}

fn min2(a: Float, b: Float) -> Float {
    if b < a {
        b
    } else {
        a
    }
}

fn max2(a: Float, b: Float) -> Float {
    if b > a {
        b
    } else {
        a
    }
}

impl MpInterval {
    pub fn point(x: &Float) -> MpInterval {
        MpInterval {
            lo: down(x),
            hi: up(x),
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0 && self.hi >= 0
    }

    pub fn width(&self) -> Float {
        up(&self.hi - &self.lo)
    }

    /// Outward binary64 enclosure.
    pub fn to_interval(&self) -> Interval {
        Interval::new(
            self.lo.to_f64_round(Round::Down),
            self.hi.to_f64_round(Round::Up),
        )
    }

    pub fn mid(&self) -> Float {
        Float::with_val(MP_PREC, &self.lo + &self.hi) / 2u32
    }

    /// Encloses f over the interval given |f'| ≤ `lip` on it, anchored at `lo`.
    fn lipschitz(&self, f: impl Fn(&Float, Round) -> Float, lip: &Float) -> MpInterval {
        let spread = up(self.width() * lip);
        MpInterval {
            lo: down(f(&self.lo, Round::Down) - &spread),
            hi: up(f(&self.lo, Round::Up) + &spread),
        }
    }
}

impl Coef for MpInterval {
    fn constant(c: &Constant) -> Self {
        let v = c.to_float(2 * MP_PREC);
        let mut lo = down(&v);
        let mut hi = up(&v);
        // The wider rounding may itself be inexact; one ulp covers it.
        lo.next_down();
        hi.next_up();
        MpInterval { lo, hi }
    }

    fn exact(v: f64) -> Self {
        MpInterval {
            lo: Float::with_val(MP_PREC, v),
            hi: Float::with_val(MP_PREC, v),
        }
    }

    fn add(&self, o: &Self) -> Self {
        MpInterval {
            lo: down(&self.lo + &o.lo),
            hi: up(&self.hi + &o.hi),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        MpInterval {
            lo: down(&self.lo - &o.hi),
            hi: up(&self.hi - &o.lo),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let (a, b, c, d) = (&self.lo, &self.hi, &o.lo, &o.hi);
        let lo = min2(
            min2(down(a * c), down(a * d)),
            min2(down(b * c), down(b * d)),
        );
        let hi = max2(max2(up(a * c), up(a * d)), max2(up(b * c), up(b * d)));
        MpInterval { lo, hi }
    }

    fn div(&self, o: &Self) -> Result<Self, DomainError> {
        if o.contains_zero() {
            return Err(DomainError::new("series division by an enclosure of zero"));
        }
        let (a, b, c, d) = (&self.lo, &self.hi, &o.lo, &o.hi);
        let lo = min2(
            min2(down(a / c), down(a / d)),
            min2(down(b / c), down(b / d)),
        );
        let hi = max2(max2(up(a / c), up(a / d)), max2(up(b / c), up(b / d)));
        Ok(MpInterval { lo, hi })
    }

    fn neg(&self) -> Self {
        MpInterval {
            lo: Float::with_val(MP_PREC, -&self.hi),
            hi: Float::with_val(MP_PREC, -&self.lo),
        }
    }

    fn exp(&self) -> Self {
        MpInterval {
            lo: down(self.lo.exp_ref()),
            hi: up(self.hi.exp_ref()),
        }
    }

    fn log(&self) -> Result<Self, DomainError> {
        if self.lo <= 0 {
            return Err(DomainError::new("series log of a nonpositive enclosure"));
        }
        Ok(MpInterval {
            lo: down(self.lo.ln_ref()),
            hi: up(self.hi.ln_ref()),
        })
    }

    fn sqrt(&self) -> Result<Self, DomainError> {
        if self.lo < 0 {
            return Err(DomainError::new("series sqrt of a negative enclosure"));
        }
        Ok(MpInterval {
            lo: down(self.lo.sqrt_ref()),
            hi: up(self.hi.sqrt_ref()),
        })
    }

    fn sin(&self) -> Self {
        let one = Float::with_val(MP_PREC, 1);
        self.lipschitz(
            |x, r| Float::with_val_round(MP_PREC, x.sin_ref(), r).0,
            &one,
        )
    }

    fn cos(&self) -> Self {
        let one = Float::with_val(MP_PREC, 1);
        self.lipschitz(
            |x, r| Float::with_val_round(MP_PREC, x.cos_ref(), r).0,
            &one,
        )
    }

    fn tan(&self) -> Result<Self, DomainError> {
        self.sin().div(&self.cos())
    }
}

fn int<C: Coef>(k: usize) -> C {
    C::exact(k as f64)
}

fn series_mul<C: Coef>(a: &[C], b: &[C]) -> Vec<C> {
    (0..a.len())
        .map(|k| {
            let mut acc = a[0].mul(&b[k]);
            for j in 1..=k {
                acc = acc.add(&a[j].mul(&b[k - j]));
            }
            acc
        })
        .collect()
}

fn series_div<C: Coef>(a: &[C], b: &[C]) -> Result<Vec<C>, DomainError> {
    let mut q: Vec<C> = Vec::with_capacity(a.len());
    for k in 0..a.len() {
        let mut acc = a[k].clone();
        for j in 1..=k {
            acc = acc.sub(&b[j].mul(&q[k - j]));
        }
        q.push(acc.div(&b[0])?);
    }
    Ok(q)
}

/// Σ_{j=1..k} j·g_j·h_{k-j}, the convolution behind every ODE-style recurrence.
fn weighted<C: Coef>(g: &[C], h: &[C], k: usize) -> C {
    let mut acc = int::<C>(1).mul(&g[1]).mul(&h[k - 1]);
    for j in 2..=k {
        acc = acc.add(&int::<C>(j).mul(&g[j]).mul(&h[k - j]));
    }
    acc
}

fn series_exp<C: Coef>(g: &[C]) -> Result<Vec<C>, DomainError> {
    let mut h = vec![g[0].exp()];
    for k in 1..g.len() {
        let v = weighted(g, &h, k).div(&int(k))?;
        h.push(v);
    }
    Ok(h)
}

fn series_log<C: Coef>(g: &[C]) -> Result<Vec<C>, DomainError> {
    let mut h = vec![g[0].log()?];
    for k in 1..g.len() {
        // g·h' = g' gives k g_0 h_k = k g_k - Σ_{j=1..k-1} j h_j g_{k-j}.
        let mut acc = int::<C>(k).mul(&g[k]);
        for j in 1..k {
            acc = acc.sub(&int::<C>(j).mul(&h[j]).mul(&g[k - j]));
        }
        h.push(acc.div(&int::<C>(k).mul(&g[0]))?);
    }
    Ok(h)
}

fn series_sqrt<C: Coef>(g: &[C]) -> Result<Vec<C>, DomainError> {
    let h0 = g[0].sqrt()?;
    let two_h0 = int::<C>(2).mul(&h0);
    let mut h = vec![h0];
    for k in 1..g.len() {
        let mut acc = g[k].clone();
        for j in 1..k {
            acc = acc.sub(&h[j].mul(&h[k - j]));
        }
        h.push(acc.div(&two_h0)?);
    }
    Ok(h)
}

fn series_sin_cos<C: Coef>(g: &[C]) -> Result<(Vec<C>, Vec<C>), DomainError> {
    let mut s = vec![g[0].sin()];
    let mut c = vec![g[0].cos()];
    for k in 1..g.len() {
        let sk = weighted(g, &c, k).div(&int(k))?;
        let ck = weighted(g, &s, k).div(&int(k))?.neg();
        s.push(sk);
        c.push(ck);
    }
    Ok((s, c))
}

fn series_tan<C: Coef>(g: &[C]) -> Result<Vec<C>, DomainError> {
    // tan' = (1 + tan²) g'.
    let t0 = g[0].tan()?;
    let mut u = vec![int::<C>(1).add(&t0.mul(&t0))];
    let mut t = vec![t0];
    for k in 1..g.len() {
        let tk = weighted(g, &u, k).div(&int(k))?;
        t.push(tk);
        let mut uk = t[0].mul(&t[k]);
        for i in 1..=k {
            uk = uk.add(&t[i].mul(&t[k - i]));
        }
        u.push(uk);
    }
    Ok(t)
}

/// Taylor coefficients of `e` in `var` about `x0`, up to and including order
/// `order`. With an interval `x0` the k-th coefficient encloses f⁽ᵏ⁾(ξ)/k!
/// for every ξ in it.
pub fn taylor<C: Coef>(
    e: &RealExpr,
    var: &str,
    x0: &C,
    order: usize,
) -> Result<Vec<C>, DomainError> {
    let mut memo = HashMap::new();
    walk(e, var, x0, order + 1, &mut memo)
}

fn walk<'e, C: Coef>(
    e: &'e RealExpr,
    var: &str,
    x0: &C,
    n: usize,
    memo: &mut HashMap<&'e RealExpr, Vec<C>>,
) -> Result<Vec<C>, DomainError> {
    if let Some(s) = memo.get(e) {
        return Ok(s.clone());
    }
    let zero = || C::exact(0.0);
    let out = match e {
        RealExpr::Const(c) => {
            let mut s = vec![C::constant(c)];
            s.resize_with(n, zero);
            s
        }
        RealExpr::Var(v) if &**v == var => {
            let mut s = vec![x0.clone()];
            if n > 1 {
                s.push(C::exact(1.0));
            }
            s.resize_with(n, zero);
            s
        }
        RealExpr::Var(v) => {
            return Err(DomainError::new(format!(
                "series in `{var}` depends on `{v}`"
            )))
        }
        RealExpr::Unary(op, a) => {
            let g = walk(a, var, x0, n, memo)?;
            match op {
                UnaryOp::Neg => g.iter().map(Coef::neg).collect(),
                UnaryOp::Sqrt => series_sqrt(&g)?,
                UnaryOp::Sin => series_sin_cos(&g)?.0,
                UnaryOp::Cos => series_sin_cos(&g)?.1,
                UnaryOp::Tan => series_tan(&g)?,
                UnaryOp::Exp => series_exp(&g)?,
                UnaryOp::Log => series_log(&g)?,
            }
        }
        RealExpr::Binary(op, l, r) => {
            let a = walk(l, var, x0, n, memo)?;
            let b = walk(r, var, x0, n, memo)?;
            match op {
                BinaryOp::Add => a.iter().zip(&b).map(|(x, y)| x.add(y)).collect(),
                BinaryOp::Sub => a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect(),
                BinaryOp::Mul => series_mul(&a, &b),
                BinaryOp::Div => series_div(&a, &b)?,
            }
        }
    };
    memo.insert(e, out.clone());
    Ok(out)
}

/// Coefficients in s of p(tau + s), where p has coefficients `coeffs` in
/// increasing degree.
pub fn taylor_shift(coeffs: &[f64], tau: &MpInterval) -> Vec<MpInterval> {
    let mut b: Vec<MpInterval> = Vec::with_capacity(coeffs.len());
    for c in coeffs.iter().rev() {
        let mut next: Vec<MpInterval> = Vec::with_capacity(b.len() + 1);
        for j in 0..=b.len() {
            let mut v = if j < b.len() {
                tau.mul(&b[j])
            } else {
                MpInterval::exact(0.0)
            };
            if j > 0 {
                v = v.add(&b[j - 1]);
            }
            if j == 0 {
                v = v.add(&MpInterval::exact(*c));
            }
            next.push(v);
        }
        b = next;
    }
    b
}
