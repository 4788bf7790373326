//! Outward-rounded interval arithmetic over binary64 endpoints.

use std::fmt;
use std::sync::OnceLock;

use rug::float::{Constant as MpConst, Round};
use rug::Float;
use serde::{Deserialize, Serialize};

use super::rounding::*;
use super::DomainError;

const PI_PREC: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Interval {
        Interval { lo: v, hi: v }
    }

    /// The symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Interval {
        Interval { lo: -r, hi: r }
    }

    pub const ENTIRE_UNIT: Interval = Interval { lo: -1.0, hi: 1.0 };

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_float(&self, v: &Float) -> bool {
        *v >= self.lo && *v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    /// Upper bound on the width.
    pub fn width(&self) -> f64 {
        sub_up(self.hi, self.lo)
    }

    /// A point inside the interval close to its midpoint.
    pub fn mid(&self) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let m = 0.5 * self.lo + 0.5 * self.hi;
        m.clamp(self.lo, self.hi)
    }

    /// Upper bound on `max(|mid - lo|, |hi - mid|)` for the given center.
    pub fn radius_about(&self, c: f64) -> f64 {
        sub_up(self.hi, c).max(sub_up(c, self.lo))
    }

    /// max |x|.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// min |x|.
    pub fn mig(&self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Bisects at the midpoint.
    pub fn split(&self) -> (Interval, Interval) {
        let m = self.mid();
        (Interval::new(self.lo, m), Interval::new(m, self.hi))
    }

    /// `n` consecutive subintervals covering `self` exactly.
    pub fn subdivide(&self, n: usize) -> Vec<Interval> {
        if n <= 1 || self.lo == self.hi {
            return vec![*self];
        }
        let mut cuts = Vec::with_capacity(n + 1);
        cuts.push(self.lo);
        for i in 1..n {
            let t = i as f64 / n as f64;
            let c = (self.lo + t * (self.hi - self.lo)).clamp(self.lo, self.hi);
            if c > *cuts.last().unwrap() && c < self.hi {
                cuts.push(c);
            }
        }
        cuts.push(self.hi);
        cuts.windows(2).map(|w| Interval::new(w[0], w[1])).collect()
    }

    /// Widens by `r` in both directions.
    pub fn inflate(&self, r: f64) -> Interval {
        Interval {
            lo: sub_down(self.lo, r),
            hi: add_up(self.hi, r),
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn abs(&self) -> Interval {
        Interval {
            lo: self.mig(),
            hi: self.mag(),
        }
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, o.lo),
            hi: add_up(self.hi, o.hi),
        }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval {
            lo: sub_down(self.lo, o.hi),
            hi: sub_up(self.hi, o.lo),
        }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = mul_down(a, c)
            .min(mul_down(a, d))
            .min(mul_down(b, c))
            .min(mul_down(b, d));
        let hi = mul_up(a, c)
            .max(mul_up(a, d))
            .max(mul_up(b, c))
            .max(mul_up(b, d));
        Interval { lo, hi }
    }

    pub fn scale(&self, k: f64) -> Interval {
        self.mul(&Interval::point(k))
    }

    /// x² (tighter than `x.mul(x)` when `x` straddles zero).
    pub fn sqr(&self) -> Interval {
        let lo = if self.contains_zero() {
            0.0
        } else {
            mul_down(self.mig(), self.mig())
        };
        Interval {
            lo,
            hi: mul_up(self.mag(), self.mag()),
        }
    }

    pub fn recip(&self) -> Result<Interval, DomainError> {
        if self.contains_zero() {
            return Err(DomainError::new(format!(
                "division by interval {self} containing zero"
            )));
        }
        Ok(Interval {
            lo: div_down(1.0, self.hi),
            hi: div_up(1.0, self.lo),
        })
    }

    pub fn div(&self, o: &Interval) -> Result<Interval, DomainError> {
        if o.contains_zero() {
            return Err(DomainError::new(format!(
                "division by interval {o} containing zero"
            )));
        }
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = div_down(a, c)
            .min(div_down(a, d))
            .min(div_down(b, c))
            .min(div_down(b, d));
        let hi = div_up(a, c)
            .max(div_up(a, d))
            .max(div_up(b, c))
            .max(div_up(b, d));
        Ok(Interval { lo, hi })
    }

    pub fn sqrt(&self) -> Result<Interval, DomainError> {
        if self.lo < 0.0 {
            return Err(DomainError::new(format!(
                "sqrt of interval {self} with negative values"
            )));
        }
        Ok(Interval {
            lo: sqrt_down(self.lo),
            hi: sqrt_up(self.hi),
        })
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: mp_down(self.lo, |x| x.exp()).max(0.0),
            hi: mp_up(self.hi, |x| x.exp()),
        }
    }

    pub fn log(&self) -> Result<Interval, DomainError> {
        if self.lo <= 0.0 {
            return Err(DomainError::new(format!(
                "log of interval {self} with nonpositive values"
            )));
        }
        Ok(Interval {
            lo: mp_down(self.lo, |x| x.ln()),
            hi: mp_up(self.hi, |x| x.ln()),
        })
    }

    pub fn sin(&self) -> Interval {
        self.trig(false)
    }

    pub fn cos(&self) -> Interval {
        self.trig(true)
    }

    /// sin or cos, locating the extrema by the position of the endpoints
    /// relative to multiples of pi/2 computed in high precision.
    fn trig(&self, cosine: bool) -> Interval {
        if !self.is_finite() || self.width() >= 6.3 {
            return Interval::ENTIRE_UNIT;
        }
        // For sin, maxima sit at pi/2 + 2k pi; for cos at 2k pi. Measure the
        // endpoints in full turns from the first maximum.
        let shift = if cosine { 0.0 } else { 0.25 };
        let (q_lo, q_hi) = (turns(self.lo, shift), turns(self.hi, shift));
        // A maximum lies inside iff some integer n has q_lo <= n <= q_hi,
        // a minimum iff some half-integer does. Ties count as inclusion.
        let has_max = contains_offset(q_lo, q_hi, 0.0);
        let has_min = contains_offset(q_lo, q_hi, 0.5);
        let f = |x: f64, up: bool| {
            if cosine {
                if up {
                    mp_up(x, |v| v.cos())
                } else {
                    mp_down(x, |v| v.cos())
                }
            } else if up {
                mp_up(x, |v| v.sin())
            } else {
                mp_down(x, |v| v.sin())
            }
        };
        let mut lo = f(self.lo, false).min(f(self.hi, false));
        let mut hi = f(self.lo, true).max(f(self.hi, true));
        if has_max {
            hi = 1.0;
        }
        if has_min {
            lo = -1.0;
        }
        Interval {
            lo: lo.max(-1.0),
            hi: hi.min(1.0),
        }
    }

    pub fn tan(&self) -> Result<Interval, DomainError> {
        if !self.is_finite() || self.width() >= 3.15 {
            return Err(DomainError::new(format!("tan over {self} crosses a pole")));
        }
        // Poles at pi/2 + k pi: measure in half turns from -pi/2.
        let lo = half_turns_from_pole(self.lo);
        let hi = half_turns_from_pole(self.hi);
        // Same branch iff floor agrees for every bracket; reject ties.
        let branch_lo = lo.0.floor();
        if lo.1.floor() != branch_lo
            || hi.0.floor() != branch_lo
            || hi.1.floor() != branch_lo
            || lo.0 == branch_lo
            || hi.1 == hi.1.ceil()
        {
            return Err(DomainError::new(format!("tan over {self} crosses a pole")));
        }
        Ok(Interval {
            lo: mp_down(self.lo, |x| x.tan()),
            hi: mp_up(self.hi, |x| x.tan()),
        })
    }
}

fn contains_offset(q_lo: (f64, f64), q_hi: (f64, f64), off: f64) -> bool {
    // Integer n with lower(q_lo) <= n + off <= upper(q_hi).
    (q_lo.0 - off).ceil() <= (q_hi.1 - off).floor()
}

/// `k * pi` at `PI_PREC` bits, cached.
pub fn pi_multiple(k: u32) -> &'static Float {
    static PI: OnceLock<Float> = OnceLock::new();
    static TWO_PI: OnceLock<Float> = OnceLock::new();
    match k {
        1 => PI.get_or_init(|| Float::with_val(PI_PREC, MpConst::Pi)),
        2 => TWO_PI.get_or_init(|| Float::with_val(PI_PREC, MpConst::Pi) * 2u32),
        _ => panic!("unsupported multiple of pi"),
    }
}

/// Bracket [lo, hi] of `x / (2 pi) - shift`, computed at high precision and
/// then widened by one ulp so that comparisons against integers are safe.
fn turns(x: f64, shift: f64) -> (f64, f64) {
    let t = Float::with_val(PI_PREC, x) / pi_multiple(2) - shift;
    (
        t.to_f64_round(Round::Down).next_down(),
        t.to_f64_round(Round::Up).next_up(),
    )
}

fn half_turns_from_pole(x: f64) -> (f64, f64) {
    let half_pi = Float::with_val(PI_PREC, pi_multiple(1) / 2u32);
    let t = (Float::with_val(PI_PREC, x) + half_pi) / pi_multiple(1);
    (
        t.to_f64_round(Round::Down).next_down(),
        t.to_f64_round(Round::Up).next_up(),
    )
}

/// f(x) rounded toward -inf, via MPFR at 53 bits with directed rounding.
pub fn mp_down(x: f64, f: impl Fn(Float) -> Float) -> f64 {
    mp_directed(x, f, Round::Down)
}

pub fn mp_up(x: f64, f: impl Fn(Float) -> Float) -> f64 {
    mp_directed(x, f, Round::Up)
}

fn mp_directed(x: f64, f: impl Fn(Float) -> Float, round: Round) -> f64 {
    // Evaluate with guard bits, then round the enclosure in the requested
    // direction. 128 extra bits and an explicit one-ulp step at that precision
    // keep the result directed regardless of MPFR's internal rounding.
    let v = f(Float::with_val(192, x));
    let step = {
        let mut s = v.clone().abs();
        if s == 0 {
            s = Float::with_val(192, 0);
        } else {
            s >>= 180u32;
        }
        s
    };
    let bound = match round {
        Round::Up => v + step,
        _ => v - step,
    };
    bound.to_f64_round(round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoint_addition() {
        let r = Interval::new(1.0, 2.0).add(&Interval::new(3.0, 4.0));
        assert_eq!(r, Interval::new(4.0, 6.0));
    }

    #[test]
    fn sine_over_symmetric_domain_reaches_extrema() {
        let r = Interval::new(-3.14, 3.14).sin();
        assert_eq!(r, Interval::new(-1.0, 1.0));
        let c = Interval::new(-3.14, 3.14).cos();
        assert_eq!(c.hi, 1.0);
        assert!(c.lo > -1.0 && c.lo < -0.99999);
    }

    #[test]
    fn sine_monotone_piece_is_tight() {
        let r = Interval::new(0.1, 0.2).sin();
        assert!(r.lo <= 0.1f64.sin() && r.lo > 0.1f64.sin() - 1e-15);
        assert!(r.hi >= 0.2f64.sin() && r.hi < 0.2f64.sin() + 1e-15);
    }

    #[test]
    fn tan_rejects_poles() {
        assert!(Interval::new(1.0, 2.0).tan().is_err());
        assert!(Interval::new(-1.1, 0.9).tan().is_ok());
        assert!(Interval::new(2.0, 4.0).tan().is_ok());
    }

    #[test]
    fn domain_errors() {
        assert!(Interval::new(-1.0, 1.0).log().is_err());
        assert!(Interval::new(0.0, 1.0).log().is_err());
        assert!(Interval::new(-1.0, 1.0).sqrt().is_err());
        assert!(Interval::new(1.0, 2.0)
            .div(&Interval::new(-1.0, 1.0))
            .is_err());
    }

    fn trig_oracle(lo: f64, hi: f64, f: fn(f64) -> f64) -> (f64, f64) {
        let n = 20_000;
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            mn = mn.min(f(x));
            mx = mx.max(f(x));
        }
        (mn, mx)
    }

    proptest! {
        #[test]
        fn trig_encloses_samples(a in -20.0f64..20.0, w in 0.0f64..7.0) {
            let iv = Interval::new(a, a + w);
            let (mn, mx) = trig_oracle(a, a + w, f64::sin);
            let s = iv.sin();
            prop_assert!(s.lo <= mn + 1e-15 && s.hi >= mx - 1e-15);
            // Not grossly wider than the sampled range.
            prop_assert!(s.lo >= mn - 1e-3 && s.hi <= mx + 1e-3);
            let (mn, mx) = trig_oracle(a, a + w, f64::cos);
            let c = iv.cos();
            prop_assert!(c.lo <= mn + 1e-15 && c.hi >= mx - 1e-15);
            prop_assert!(c.lo >= mn - 1e-3 && c.hi <= mx + 1e-3);
        }

        #[test]
        fn directed_endpoints_bracket_mpfr(x in -700.0f64..700.0) {
            let e = Float::with_val(300, x).exp();
            prop_assert!(mp_down(x, |v| v.exp()) <= e && e <= mp_up(x, |v| v.exp()));
        }
    }
}
