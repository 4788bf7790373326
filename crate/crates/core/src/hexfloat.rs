//! C99 hexadecimal floating-point literals (`0x1.921fb54442d18p+1`).
//!
//! Emitted coefficients must parse back to the identical binary64 value, so
//! both directions are exact.

use rug::Float;

/// Formats `v` the way `printf("%a")` does for normal and subnormal values.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        return "NAN".to_string();
    }
    let sign = if v.is_sign_negative() { "-" } else { "" };
    if v.is_infinite() {
        return format!("{sign}INFINITY");
    }
    let bits = v.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 {
        (0, -1022)
    } else {
        (1, biased - 1023)
    };
    let digits = format!("{frac:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

/// Formats a binary32 value as a C `float` literal (with `f` suffix).
pub fn format_f32(v: f32) -> String {
    // Every binary32 is a binary64, and the printed digits are exact.
    format!("{}f", format_f64(v as f64))
}

/// A parsed hexadecimal literal: `mantissa * 2^exponent`, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HexLiteral {
    pub negative: bool,
    pub mantissa: u128,
    pub exponent: i64,
}

impl HexLiteral {
    pub fn to_float(self, prec: u32) -> Float {
        let mut f = Float::with_val(prec.max(128), self.mantissa);
        if self.exponent >= 0 {
            f <<= self.exponent as u32;
        } else {
            f >>= (-self.exponent) as u32;
        }
        if self.negative {
            f = -f;
        }
        Float::with_val(prec, f)
    }

    pub fn to_f64(self) -> f64 {
        self.to_float(128).to_f64()
    }

    pub fn to_f32(self) -> f32 {
        self.to_float(128).to_f32()
    }
}

/// Parses `[-]0x<hex>[.<hex>][p[+-]<dec>]`. Returns `None` on malformed input
/// or when the significand needs more than 128 bits.
pub fn parse(text: &str) -> Option<HexLiteral> {
    let (negative, rest) = match text.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))?;
    let (mant_part, exp_part) = match rest.find(['p', 'P']) {
        Some(i) => (&rest[..i], Some(&rest[i + 1..])),
        None => (rest, None),
    };
    let (int_digits, frac_digits) = match mant_part.find('.') {
        Some(i) => (&mant_part[..i], &mant_part[i + 1..]),
        None => (mant_part, ""),
    };
    if int_digits.is_empty() && frac_digits.is_empty() {
        return None;
    }
    let mut mantissa: u128 = 0;
    for c in int_digits.chars().chain(frac_digits.chars()) {
        let d = c.to_digit(16)? as u128;
        mantissa = mantissa.checked_mul(16)?.checked_add(d)?;
    }
    let mut exponent: i64 = match exp_part {
        Some(e) if !e.is_empty() => e.parse().ok()?,
        Some(_) => return None,
        None => 0,
    };
    exponent -= 4 * frac_digits.len() as i64;
    Some(HexLiteral {
        negative,
        mantissa,
        exponent,
    })
}

pub fn parse_f64(text: &str) -> Option<f64> {
    parse(text).map(HexLiteral::to_f64)
}
