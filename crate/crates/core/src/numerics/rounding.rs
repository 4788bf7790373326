//! Directed rounding of the basic operations without touching the FPU mode.
//!
//! Each operation computes the round-to-nearest result and recovers the sign
//! of the rounding error with an error-free transformation. Where the residual
//! itself could underflow the result is widened by one ulp instead.

/// Below this magnitude FMA residuals may be inexact.
const TINY: f64 = 1.0e-290;

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
fn fix_up(r: f64, exact_above: bool) -> f64 {
    if exact_above {
        r.next_up()
    } else {
        r
    }
}

#[inline]
fn fix_down(r: f64, exact_below: bool) -> f64 {
    if exact_below {
        r.next_down()
    } else {
        r
    }
}

/// Directed result for an operation on finite operands that overflowed.
#[inline]
fn overflowed(r: f64, up: bool) -> f64 {
    match (r == f64::INFINITY, up) {
        (true, true) => f64::INFINITY,
        (true, false) => f64::MAX,
        (false, true) => -f64::MAX,
        (false, false) => f64::NEG_INFINITY,
    }
}

pub fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return if s.is_nan() {
            f64::INFINITY
        } else {
            overflowed(s, true)
        };
    }
    fix_up(s, two_sum_err(a, b, s) > 0.0)
}

pub fn add_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            overflowed(s, false)
        };
    }
    fix_down(s, two_sum_err(a, b, s) < 0.0)
}

pub fn sub_up(a: f64, b: f64) -> f64 {
    add_up(a, -b)
}

pub fn sub_down(a: f64, b: f64) -> f64 {
    add_down(a, -b)
}

pub fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if !p.is_finite() {
        return if p.is_nan() {
            f64::INFINITY
        } else {
            overflowed(p, true)
        };
    }
    if p.abs() < TINY {
        return p.next_up();
    }
    fix_up(p, a.mul_add(b, -p) > 0.0)
}

pub fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if !p.is_finite() {
        return if p.is_nan() {
            f64::NEG_INFINITY
        } else {
            overflowed(p, false)
        };
    }
    if p.abs() < TINY {
        return p.next_down();
    }
    fix_down(p, a.mul_add(b, -p) < 0.0)
}

/// Sign of `a/b - q` where `q` is the rounded quotient.
fn div_residual_sign(a: f64, b: f64, q: f64) -> f64 {
    let r = (-q).mul_add(b, a);
    if b > 0.0 {
        r
    } else {
        -r
    }
}

pub fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a == 0.0 && b != 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return if q.is_nan() || b == 0.0 {
            f64::INFINITY
        } else {
            overflowed(q, true)
        };
    }
    if q.abs() < TINY || a.abs() < TINY {
        return q.next_up();
    }
    fix_up(q, div_residual_sign(a, b, q) > 0.0)
}

pub fn div_down(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a == 0.0 && b != 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return if q.is_nan() || b == 0.0 {
            f64::NEG_INFINITY
        } else {
            overflowed(q, false)
        };
    }
    if q.abs() < TINY || a.abs() < TINY {
        return q.next_down();
    }
    fix_down(q, div_residual_sign(a, b, q) < 0.0)
}

pub fn sqrt_up(a: f64) -> f64 {
    let s = a.sqrt();
    if a == 0.0 || !s.is_finite() {
        return s;
    }
    if a < TINY {
        return s.next_up();
    }
    fix_up(s, (-s).mul_add(s, a) > 0.0)
}

pub fn sqrt_down(a: f64) -> f64 {
    let s = a.sqrt();
    if a == 0.0 || !s.is_finite() {
        return s;
    }
    if a < TINY {
        return s.next_down().max(0.0);
    }
    fix_down(s, (-s).mul_add(s, a) < 0.0)
}

/// Upward-rounded sum of nonnegative terms.
pub fn sum_up(terms: impl IntoIterator<Item = f64>) -> f64 {
    terms.into_iter().fold(0.0, add_up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rug::Float;

    fn exact(f: impl Fn(&mut Float)) -> Float {
        let mut x = Float::with_val(4096, 0);
        f(&mut x);
        x
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6f64..1e6,
            any::<u64>()
                .prop_map(f64::from_bits)
                .prop_filter("finite", |v| v.is_finite()),
        ]
    }

    proptest! {
        #[test]
        fn add_brackets_exact(a in finite(), b in finite()) {
            let e = exact(|x| { *x += a; *x += b; });
            prop_assert!(add_down(a, b) <= e && e <= add_up(a, b));
        }

        #[test]
        fn mul_brackets_exact(a in finite(), b in finite()) {
            let e = exact(|x| { *x += a; *x *= b; });
            prop_assert!(mul_down(a, b) <= e && e <= mul_up(a, b));
        }

        #[test]
        fn div_brackets_exact(a in finite(), b in finite()) {
            prop_assume!(b != 0.0);
            let mut x = Float::with_val(4096, a);
            x /= b;
            prop_assert!(div_down(a, b) <= x && x <= div_up(a, b));
        }

        #[test]
        fn sqrt_brackets_exact(a in 0.0f64..1e300) {
            let x = Float::with_val(4096, a).sqrt();
            prop_assert!(sqrt_down(a) <= x && x <= sqrt_up(a));
        }
    }

    #[test]
    fn exact_operations_are_not_widened() {
        assert_eq!(add_up(1.0, 2.0), 3.0);
        assert_eq!(add_down(1.0, 2.0), 3.0);
        assert_eq!(mul_up(1.5, 2.0), 3.0);
        assert_eq!(div_down(1.0, 4.0), 0.25);
        assert_eq!(sqrt_up(4.0), 2.0);
        assert!(add_up(0.1, 0.2) > add_down(0.1, 0.2));
    }
}
