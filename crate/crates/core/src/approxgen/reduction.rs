//! Argument reduction and reconstruction.
//!
//! Reductions fire only on a recognized head applied directly to the
//! argument. Each [`Plan`] knows the domain its inner polynomial must cover
//! and how a certified inner error turns into an error of the whole kernel.

use rug::float::{Constant as MpConst, Round};
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::expr::{RealExpr, UnaryOp};
use crate::frontend::PLACEHOLDER;
use crate::numerics::rounding::{add_up, mul_up};
use crate::numerics::Interval;

/// Adding and subtracting this rounds a double of magnitude below 2^51 to
/// the nearest integer.
pub const SHIFTER: f64 = 6755399441055744.0;
const EPS: f64 = f64::EPSILON / 2.0;
const TINY: f64 = f64::from_bits(1);
/// Reductions that multiply k by a split constant keep |k| below this so
/// that k times the leading part is exact.
const MAX_K: f64 = 1048576.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reduction {
    None,
    /// f(-x) = -f(x): evaluate at |x| and restore the sign.
    OddFold,
    /// f(-x) = f(x).
    EvenFold,
    /// r = x - k·2π with 2π split as c1 + c2.
    Periodic {
        inv: f64,
        c1: f64,
        c2: f64,
    },
    /// exp(x) = 2^k·exp(r), r = x - k·ln2 with ln2 split as c1 + c2.
    ExpScale {
        inv: f64,
        c1: f64,
        c2: f64,
    },
    /// log(x) = e·ln2 + log(m), m in [√2/2, √2].
    LogMantissa {
        c1: f64,
        c2: f64,
        sqrt2: f64,
    },
}

impl Reduction {
    /// Operations on the worst-case path outside the polynomial.
    pub fn cost(&self) -> u32 {
        match self {
            Reduction::None => 0,
            Reduction::OddFold => 2,
            Reduction::EvenFold => 1,
            Reduction::Periodic { .. } => 7,
            Reduction::ExpScale { .. } | Reduction::LogMantissa { .. } => 10,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reduction::None => "none",
            Reduction::OddFold => "odd",
            Reduction::EvenFold => "even",
            Reduction::Periodic { .. } => "periodic",
            Reduction::ExpScale { .. } => "exp2k",
            Reduction::LogMantissa { .. } => "log2k",
        }
    }

    /// Runs the reduction and reconstruction around `inner`, with the same
    /// operation sequence as the emitted C.
    pub fn apply(&self, x: f64, mut inner: impl FnMut(f64) -> f64) -> f64 {
        match *self {
            Reduction::None => inner(x),
            Reduction::OddFold => {
                if x < 0.0 {
                    -inner(-x)
                } else {
                    inner(x)
                }
            }
            Reduction::EvenFold => inner(if x < 0.0 { -x } else { x }),
            Reduction::Periodic { inv, c1, c2 } => {
                let kd = (x * inv + SHIFTER) - SHIFTER;
                inner((x - kd * c1) - kd * c2)
            }
            Reduction::ExpScale { inv, c1, c2 } => {
                let kd = (x * inv + SHIFTER) - SHIFTER;
                let p = inner((x - kd * c1) - kd * c2);
                let k = kd as i64;
                p * f64::from_bits(((k + 1023) as u64) << 52)
            }
            Reduction::LogMantissa { c1, c2, sqrt2 } => {
                let bits = x.to_bits();
                let mut e = ((bits >> 52) & 0x7ff) as i64 - 1023;
                let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
                if m > sqrt2 {
                    m *= 0.5;
                    e += 1;
                }
                let ed = e as f64;
                ed * c1 + (ed * c2 + inner(m))
            }
        }
    }
}

/// One value of the reduction integer k (or exponent e) and what it
/// contributes to the total error.
#[derive(Debug, Clone, PartialEq)]
struct Case {
    /// 2^k for the exp reconstruction, 1 otherwise.
    scale: f64,
    /// Bound on |computed reduced argument - exact reduced argument|.
    delta: f64,
    /// Bound on |f'| of the inner function near the reduced argument.
    lip: f64,
    log: Option<LogCase>,
}

#[derive(Debug, Clone, PartialEq)]
struct LogCase {
    k1: f64,
    k2: f64,
    log_m: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub reduction: Reduction,
    /// Every value the inner polynomial is evaluated at.
    pub fit_domain: Interval,
    cases: Vec<Case>,
}

impl Plan {
    pub fn identity(dom: Interval) -> Plan {
        Plan {
            reduction: Reduction::None,
            fit_domain: dom,
            cases: vec![],
        }
    }

    /// Bound on the kernel's error given a certified bound on the inner
    /// polynomial's error over the fit domain.
    pub fn total_error(&self, inner: f64) -> f64 {
        self.cases
            .iter()
            .map(|c| case_error(c, inner))
            .fold(inner, f64::max)
    }

    /// Largest inner error that keeps the total within `eps`, or None if the
    /// reduction alone already uses it up.
    pub fn inner_target(&self, eps: f64) -> Option<f64> {
        let mut target = self
            .cases
            .iter()
            .map(|c| (eps - case_error(c, 0.0)) / c.scale)
            .fold(eps, f64::min);
        // The rounding terms grow slightly with the inner error.
        target *= 1.0 - 1e-9;
        for _ in 0..8 {
            if target <= 0.0 {
                return None;
            }
            let total = self.total_error(target);
            if total <= eps {
                return Some(target);
            }
            target -= 2.0 * (total - eps);
        }
        None
    }
}

fn case_error(c: &Case, inner: f64) -> f64 {
    let mut t = add_up(inner, mul_up(c.lip, c.delta));
    if let Some(l) = &c.log {
        // fl(k1 + fl(k2 + p)) with p within `inner` of log(m).
        let p = l.log_m.inflate(inner);
        let s1 = p.add(&Interval::point(l.k2));
        let e1 = add_up(mul_up(EPS, s1.mag()), TINY);
        let s2 = s1.inflate(e1).add(&Interval::point(l.k1));
        let e2 = add_up(mul_up(EPS, s2.mag()), TINY);
        t = add_up(add_up(t, e1), e2);
    }
    mul_up(c.scale, t)
}

fn split_constant(v: &Float) -> (f64, f64) {
    let hi = Float::with_val(32, v).to_f64();
    let lo = Float::with_val(256, v - hi).to_f64();
    (hi, lo)
}

fn mp_const(c: MpConst, factor: u32) -> Float {
    Float::with_val(256, c) * factor
}

/// |k1 + k2 - k·c| rounded up, with slack for the 256-bit value of c.
fn split_error(k: f64, k1: f64, k2: f64, c: &Float) -> f64 {
    let d = Float::with_val(256, Float::with_val(256, k1) + k2) - Float::with_val(256, c * k);
    let slack = mul_up(k.abs().max(1.0), 2f64.powi(-240));
    add_up(d.abs().to_f64_round(Round::Up), slack)
}

/// Additive Cody-Waite reduction r = (x - k·c1) - k·c2 for every k the
/// shifter can produce on `dom`. Returns the cases and the hull of the
/// computed r.
fn additive_cases(
    dom: Interval,
    inv: f64,
    c1: f64,
    c2: f64,
    c: &Float,
) -> Option<(Vec<(f64, Interval, f64)>, Interval)> {
    if dom.lo.abs().max(dom.hi.abs()) * inv.abs() >= MAX_K {
        return None;
    }
    let k_lo = (dom.lo * inv).floor() - 1.0;
    let k_hi = (dom.hi * inv).ceil() + 1.0;
    // fl(x·inv) = x·inv·(1+θ), |θ| ≤ eps, rounds to k.
    let scale = Interval::new(inv * (1.0 - 2.0 * EPS), inv * (1.0 + 2.0 * EPS));
    let mut out = Vec::new();
    let mut hull: Option<Interval> = None;
    let mut k = k_lo;
    while k <= k_hi {
        let bracket = Interval::new(k - 0.5, k + 0.5).div(&scale).ok()?;
        if let Some(xk) = bracket.intersect(&dom) {
            let k1 = k * c1;
            let k2 = k * c2;
            let a = xk.sub(&Interval::point(k1));
            let e1 = add_up(mul_up(EPS, a.mag()), TINY);
            let b = a.inflate(e1).sub(&Interval::point(k2));
            let e2 = add_up(mul_up(EPS, b.mag()), TINY);
            let r = b.inflate(e2);
            let delta = add_up(add_up(split_error(k, k1, k2, c), e1), e2);
            hull = Some(hull.map_or(r, |h| h.hull(&r)));
            out.push((k, r, delta));
        }
        k += 1.0;
    }
    hull.map(|h| (out, h))
}

fn periodic(dom: Interval) -> Option<Plan> {
    let two_pi = mp_const(MpConst::Pi, 2);
    let inv = Float::with_val(53, 1 / &two_pi).to_f64();
    let (c1, c2) = split_constant(&two_pi);
    let (ks, fit) = additive_cases(dom, inv, c1, c2, &two_pi)?;
    let cases = ks
        .into_iter()
        .map(|(_, _, delta)| Case {
            scale: 1.0,
            delta,
            lip: 1.0,
            log: None,
        })
        .collect();
    Some(Plan {
        reduction: Reduction::Periodic { inv, c1, c2 },
        fit_domain: fit,
        cases,
    })
}

fn exp_scale(dom: Interval) -> Option<Plan> {
    let ln2 = mp_const(MpConst::Log2, 1);
    let inv = Float::with_val(53, 1 / &ln2).to_f64();
    let (c1, c2) = split_constant(&ln2);
    let (ks, fit) = additive_cases(dom, inv, c1, c2, &ln2)?;
    if ks.iter().any(|(k, _, _)| !(-1000.0..=1000.0).contains(k)) {
        return None;
    }
    let cases = ks
        .into_iter()
        .map(|(k, r, delta)| Case {
            scale: 2f64.powi(k as i32),
            delta,
            // |exp(r) - exp(r')| ≤ exp(max) |r - r'|.
            lip: Interval::point(r.hi + delta).exp().hi,
            log: None,
        })
        .collect();
    Some(Plan {
        reduction: Reduction::ExpScale { inv, c1, c2 },
        fit_domain: fit,
        cases,
    })
}

fn log_mantissa(dom: Interval) -> Option<Plan> {
    if dom.lo < f64::MIN_POSITIVE || !dom.hi.is_finite() {
        return None;
    }
    let ln2 = mp_const(MpConst::Log2, 1);
    let (c1, c2) = split_constant(&ln2);
    let sqrt2 = std::f64::consts::SQRT_2;
    let e_lo = dom.lo.log2().floor() as i32 - 1;
    let e_hi = dom.hi.log2().ceil() as i32 + 1;
    let mut cases = Vec::new();
    let mut hull: Option<Interval> = None;
    for e in e_lo..=e_hi {
        let p2 = 2f64.powi(e);
        let band = Interval::new(p2 * (sqrt2 * 0.5), p2 * sqrt2);
        let Some(xe) = band.intersect(&dom) else {
            continue;
        };
        // Scaling by a power of two is exact for normal numbers.
        let m = Interval::new(xe.lo / p2, xe.hi / p2);
        let ed = e as f64;
        let (k1, k2) = (ed * c1, ed * c2);
        cases.push(Case {
            scale: 1.0,
            delta: split_error(ed, k1, k2, &ln2),
            lip: 1.0,
            log: Some(LogCase {
                k1,
                k2,
                log_m: m.log().ok()?,
            }),
        });
        hull = Some(hull.map_or(m, |h| h.hull(&m)));
    }
    Some(Plan {
        reduction: Reduction::LogMantissa { c1, c2, sqrt2 },
        fit_domain: hull?,
        cases,
    })
}

fn head(f: &RealExpr) -> Option<UnaryOp> {
    match f {
        RealExpr::Unary(op, a) if **a == RealExpr::var(PLACEHOLDER) => Some(*op),
        _ => None,
    }
}

/// Chooses the reduction for `f` over `dom`. Compound functions and sqrt
/// are never reduced.
pub fn reduce_argument(f: &RealExpr, dom: Interval) -> Plan {
    let two_pi = 2.0 * std::f64::consts::PI;
    let straddles = dom.lo < 0.0 && dom.hi > 0.0;
    let reach = dom.lo.abs().max(dom.hi.abs());
    let fold = |r: Reduction| Plan {
        reduction: r,
        fit_domain: Interval::new(0.0, reach),
        cases: vec![],
    };
    let planned = match head(f) {
        Some(op @ (UnaryOp::Sin | UnaryOp::Cos)) => {
            let kind = if op == UnaryOp::Sin {
                Reduction::OddFold
            } else {
                Reduction::EvenFold
            };
            if straddles && reach <= two_pi {
                Some(fold(kind))
            } else if dom.width() > two_pi {
                periodic(dom)
            } else {
                None
            }
        }
        Some(UnaryOp::Tan) if straddles => Some(fold(Reduction::OddFold)),
        Some(UnaryOp::Exp) if dom.width() > std::f64::consts::LN_2 => exp_scale(dom),
        Some(UnaryOp::Log) if dom.lo > 0.0 && dom.hi > 2.0 * dom.lo => log_mantissa(dom),
        _ => None,
    };
    planned.unwrap_or_else(|| Plan::identity(dom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bigreal::REF_PREC;

    fn fun(op: UnaryOp) -> RealExpr {
        RealExpr::unary(op, RealExpr::var(PLACEHOLDER))
    }

    #[test]
    fn sine_folds_to_positive_half() {
        let p = reduce_argument(&fun(UnaryOp::Sin), Interval::new(-3.14, 3.14));
        assert_eq!(p.reduction, Reduction::OddFold);
        assert_eq!(p.fit_domain, Interval::new(0.0, 3.14));
        assert_eq!(p.total_error(1e-15), 1e-15);
    }

    #[test]
    fn compound_is_not_reduced() {
        let u = RealExpr::var(PLACEHOLDER);
        let inner = RealExpr::add(
            RealExpr::add(
                RealExpr::unary(UnaryOp::Exp, u.clone()),
                RealExpr::mul(RealExpr::literal("2"), RealExpr::unary(UnaryOp::Sqrt, u)),
            ),
            RealExpr::literal("1"),
        );
        let f = RealExpr::unary(UnaryOp::Log, RealExpr::div(inner, RealExpr::literal("2.0")));
        assert_eq!(
            reduce_argument(&f, Interval::new(0.1, 1.0)).reduction,
            Reduction::None
        );
    }

    #[test]
    fn exp_reduces_to_half_ln2() {
        let p = reduce_argument(&fun(UnaryOp::Exp), Interval::new(0.0, 10.0));
        assert!(matches!(p.reduction, Reduction::ExpScale { .. }));
        let h = std::f64::consts::LN_2 / 2.0;
        assert!(
            p.fit_domain.lo >= -h - 1e-12 && p.fit_domain.hi <= h + 1e-12,
            "{}",
            p.fit_domain
        );
        // The inner error is scaled by at most 2^15 over [0, 10].
        let t = p.inner_target(1e-10).unwrap();
        assert!(t > 1e-10 / 2f64.powi(15) && t < 1e-10 / 2f64.powi(13));
    }

    /// The computed reduced argument lands in the fit domain, and its
    /// distance to the exact x - k·c stays within the analyzed delta.
    #[test]
    fn additive_reductions_stay_in_fit_domain() {
        for (op, dom) in [
            (UnaryOp::Exp, Interval::new(-14.0, 9.0)),
            (UnaryOp::Sin, Interval::new(-40.0, 25.0)),
        ] {
            let p = reduce_argument(&fun(op), dom);
            let c = if op == UnaryOp::Exp {
                mp_const(MpConst::Log2, 1)
            } else {
                mp_const(MpConst::Pi, 2)
            };
            let max_delta = p.cases.iter().map(|c| c.delta).fold(0.0, f64::max);
            for i in 0..=100000 {
                let x = dom.lo + (dom.hi - dom.lo) * i as f64 / 100000.0;
                let mut seen = None;
                p.reduction.apply(x, |r| {
                    seen = Some(r);
                    0.0
                });
                let r = seen.unwrap();
                assert!(p.fit_domain.contains(r), "{op:?} {x} -> {r}");
                let k = ((Float::with_val(REF_PREC, x) - Float::with_val(REF_PREC, r)) / &c)
                    .to_f64()
                    .round();
                let exact = Float::with_val(REF_PREC, x) - Float::with_val(REF_PREC, &c * k);
                let d = (exact - r).abs().to_f64();
                assert!(d <= max_delta, "{x}: {d} > {max_delta}");
            }
        }
    }

    #[test]
    fn log_mantissa_range() {
        let p = reduce_argument(&fun(UnaryOp::Log), Interval::new(0.1, 100.0));
        assert!(matches!(p.reduction, Reduction::LogMantissa { .. }));
        let s = std::f64::consts::SQRT_2;
        assert!(p.fit_domain.lo >= s / 2.0 && p.fit_domain.hi <= s);
        for x in [0.1, 0.7, 1.0, 1.5, 3.0, 99.0] {
            let r = p.reduction.apply(x, f64::ln);
            assert!((r - x.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn narrow_shifted_domain_is_fitted_directly() {
        let p = reduce_argument(&fun(UnaryOp::Sin), Interval::new(17.0, 18.0));
        assert_eq!(p.reduction, Reduction::None);
    }
}
