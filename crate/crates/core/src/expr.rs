//! Real-valued expression trees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::hexfloat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
}

impl UnaryOp {
    /// The elementary functions that are candidates for approximation.
    pub fn is_elementary(self) -> bool {
        matches!(
            self,
            UnaryOp::Sin | UnaryOp::Cos | UnaryOp::Tan | UnaryOp::Exp | UnaryOp::Log
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
        }
    }

    pub fn from_function_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sqrt" => UnaryOp::Sqrt,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed numeric literal `{0}`")]
pub struct BadLiteral(pub String);

/// A literal constant. The source text is the exact real value; `value` and
/// `value32` are its round-to-nearest binary64 and binary32 images.
///
/// Equality and hashing use the text only.
#[derive(Debug, Clone)]
pub struct Constant {
    text: Arc<str>,
    value: f64,
    value32: f32,
    /// The real value is a dyadic rational that fits in 1024 bits.
    dyadic: bool,
}

impl Constant {
    pub fn parse(text: &str) -> Result<Constant, BadLiteral> {
        let bad = || BadLiteral(text.to_string());
        if text.contains("0x") || text.contains("0X") {
            let hex = hexfloat::parse(text).ok_or_else(bad)?;
            return Ok(Constant {
                text: text.into(),
                value: hex.to_f64(),
                value32: hex.to_f32(),
                dyadic: true,
            });
        }
        let decimal = parse_decimal(text).ok_or_else(bad)?;
        let exact = Float::with_val(1024, Float::parse(text).map_err(|_| bad())?);
        let value = exact.to_f64();
        if !value.is_finite() {
            return Err(bad());
        }
        Ok(Constant {
            text: text.into(),
            value,
            value32: exact.to_f32(),
            dyadic: decimal.is_dyadic(),
        })
    }

    /// An exactly representable constant. Integers print in decimal, other
    /// values as hexadecimal literals.
    pub fn from_f64(v: f64) -> Constant {
        assert!(v.is_finite(), "constant must be finite");
        let text = if v == v.trunc() && v.abs() < 9.007_199_254_740_992e15 {
            if v == 0.0 && v.is_sign_negative() {
                "-0".to_string()
            } else {
                format!("{}", v as i64)
            }
        } else {
            hexfloat::format_f64(v)
        };
        Constant {
            text: text.into(),
            value: v,
            value32: v as f32,
            dyadic: true,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Binary64 rounding of the real value.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Binary32 rounding of the real value (rounded directly from the text).
    pub fn value32(&self) -> f32 {
        self.value32
    }

    /// Whether the binary64 value equals the real value.
    pub fn is_exact_f64(&self) -> bool {
        self.dyadic && Float::with_val(1024, self.to_float(1024) - self.value) == 0
    }

    pub fn is_exact_f32(&self) -> bool {
        self.dyadic && Float::with_val(1024, self.to_float(1024) - self.value32) == 0
    }

    /// The real value at `prec` bits (exact when the constant is dyadic and
    /// `prec` is large enough).
    pub fn to_float(&self, prec: u32) -> Float {
        if let Some(hex) = hexfloat::parse(&self.text) {
            return hex.to_float(prec);
        }
        Float::with_val(
            prec,
            Float::parse(&*self.text).expect("validated at construction"),
        )
    }

    /// Upper bound on |value - real|, where value is the rounding to the given
    /// format.
    pub fn representation_error(&self, single: bool) -> f64 {
        let rounded = if single {
            self.value32 as f64
        } else {
            self.value
        };
        let exact = self.to_float(1024);
        let diff = Float::with_val(1024, &exact - rounded).abs();
        let mut err = diff.to_f64_round(rug::float::Round::Up);
        if !self.dyadic {
            // 1024-bit rounding of a non-dyadic decimal is off by < 2^-1023 relative.
            let slack = Float::with_val(64, exact.abs_ref()) >> 1000u32;
            err = crate::numerics::rounding::add_up(err, slack.to_f64_round(rug::float::Round::Up));
        }
        err
    }

    pub fn is_zero(&self) -> bool {
        self.dyadic && self.value == 0.0
    }

    pub fn is_one(&self) -> bool {
        self.dyadic && self.value == 1.0
    }
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for Constant {}

impl Hash for Constant {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.text.hash(state);
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

struct Decimal {
    digits: u128,
    exp10: i64,
    overflow: bool,
}

impl Decimal {
    fn is_dyadic(&self) -> bool {
        if self.overflow {
            return false;
        }
        if self.digits == 0 || self.exp10 >= 0 {
            return true;
        }
        let mut d = self.digits;
        for _ in 0..(-self.exp10) {
            if !d.is_multiple_of(5) {
                return false;
            }
            d /= 5;
        }
        true
    }
}

fn parse_decimal(text: &str) -> Option<Decimal> {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (mant, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i64>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut digits: u128 = 0;
    let mut overflow = false;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(10)? as u128;
        match digits.checked_mul(10).and_then(|v| v.checked_add(d)) {
            Some(v) => digits = v,
            None => overflow = true,
        }
    }
    Some(Decimal {
        digits,
        exp10: exp - frac_part.len() as i64,
        overflow,
    })
}

/// A real-valued expression over `+ - * /`, `sqrt` and the elementary
/// functions. Variables name either program parameters or let-bound locals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RealExpr {
    Const(Constant),
    Var(Arc<str>),
    Unary(UnaryOp, Box<RealExpr>),
    Binary(BinaryOp, Box<RealExpr>, Box<RealExpr>),
}

impl RealExpr {
    pub fn var(name: &str) -> RealExpr {
        RealExpr::Var(name.into())
    }

    pub fn constant(v: f64) -> RealExpr {
        RealExpr::Const(Constant::from_f64(v))
    }

    pub fn literal(text: &str) -> RealExpr {
        RealExpr::Const(Constant::parse(text).expect("valid literal"))
    }

    pub fn unary(op: UnaryOp, e: RealExpr) -> RealExpr {
        RealExpr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: RealExpr, r: RealExpr) -> RealExpr {
        RealExpr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn add(l: RealExpr, r: RealExpr) -> RealExpr {
        RealExpr::binary(BinaryOp::Add, l, r)
    }

    pub fn sub(l: RealExpr, r: RealExpr) -> RealExpr {
        RealExpr::binary(BinaryOp::Sub, l, r)
    }

    pub fn mul(l: RealExpr, r: RealExpr) -> RealExpr {
        RealExpr::binary(BinaryOp::Mul, l, r)
    }

    pub fn div(l: RealExpr, r: RealExpr) -> RealExpr {
        RealExpr::binary(BinaryOp::Div, l, r)
    }

    pub fn neg(e: RealExpr) -> RealExpr {
        RealExpr::unary(UnaryOp::Neg, e)
    }

    pub fn as_const(&self) -> Option<&Constant> {
        match self {
            RealExpr::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Height of the tree; leaves have height 0.
    pub fn height(&self) -> usize {
        match self {
            RealExpr::Const(_) | RealExpr::Var(_) => 0,
            RealExpr::Unary(_, e) => 1 + e.height(),
            RealExpr::Binary(_, l, r) => 1 + l.height().max(r.height()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            RealExpr::Const(_) | RealExpr::Var(_) => 1,
            RealExpr::Unary(_, e) => 1 + e.size(),
            RealExpr::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Arc<str>>) {
        match self {
            RealExpr::Const(_) => {}
            RealExpr::Var(v) => {
                out.insert(v.clone());
            }
            RealExpr::Unary(_, e) => e.collect_vars(out),
            RealExpr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            RealExpr::Const(_) => false,
            RealExpr::Var(v) => &**v == name,
            RealExpr::Unary(_, e) => e.mentions(name),
            RealExpr::Binary(_, l, r) => l.mentions(name) || r.mentions(name),
        }
    }

    pub fn contains_elementary(&self) -> bool {
        self.any_unary(|op| op.is_elementary())
    }

    pub fn any_unary(&self, pred: impl Fn(UnaryOp) -> bool + Copy) -> bool {
        match self {
            RealExpr::Const(_) | RealExpr::Var(_) => false,
            RealExpr::Unary(op, e) => pred(*op) || e.any_unary(pred),
            RealExpr::Binary(_, l, r) => l.any_unary(pred) || r.any_unary(pred),
        }
    }

    /// Replaces free variables by the given expressions.
    pub fn substitute(&self, map: &BTreeMap<Arc<str>, RealExpr>) -> RealExpr {
        match self {
            RealExpr::Const(_) => self.clone(),
            RealExpr::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            RealExpr::Unary(op, e) => RealExpr::unary(*op, e.substitute(map)),
            RealExpr::Binary(op, l, r) => {
                RealExpr::binary(*op, l.substitute(map), r.substitute(map))
            }
        }
    }

    pub fn substitute_one(&self, name: &str, with: &RealExpr) -> RealExpr {
        let mut map = BTreeMap::new();
        map.insert(Arc::from(name), with.clone());
        self.substitute(&map)
    }

    /// Replaces every occurrence of the subtree `needle` by `with`.
    pub fn replace_subtree(&self, needle: &RealExpr, with: &RealExpr) -> RealExpr {
        if self == needle {
            return with.clone();
        }
        match self {
            RealExpr::Const(_) | RealExpr::Var(_) => self.clone(),
            RealExpr::Unary(op, e) => RealExpr::unary(*op, e.replace_subtree(needle, with)),
            RealExpr::Binary(op, l, r) => RealExpr::binary(
                *op,
                l.replace_subtree(needle, with),
                r.replace_subtree(needle, with),
            ),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            RealExpr::Binary(op, _, _) => op.precedence(),
            RealExpr::Unary(UnaryOp::Neg, _) => 3,
            RealExpr::Const(c) if c.text().starts_with('-') => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for RealExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealExpr::Const(c) => write!(f, "{c}"),
            RealExpr::Var(v) => f.write_str(v),
            RealExpr::Unary(UnaryOp::Neg, e) => {
                // Parenthesize anything that would otherwise re-lex as a
                // negative literal or bind differently.
                if e.precedence() < 4 || matches!(**e, RealExpr::Const(_)) {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            RealExpr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            RealExpr::Binary(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_exactness() {
        assert!(Constant::parse("0.5").unwrap().is_exact_f64());
        assert!(Constant::parse("2.5").unwrap().is_exact_f64());
        assert!(!Constant::parse("0.1").unwrap().is_exact_f64());
        assert!(!Constant::parse("3.14").unwrap().is_exact_f64());
        assert_eq!(
            Constant::parse("0.5").unwrap().representation_error(false),
            0.0
        );
        let e = Constant::parse("0.1").unwrap().representation_error(false);
        assert!(e > 5.5e-18 && e < 5.6e-18, "{e}");
    }

    #[test]
    fn single_precision_rounds_from_text() {
        let c = Constant::parse("0.1").unwrap();
        assert_eq!(c.value32(), 0.1f32);
        assert!(c.representation_error(true) > 1e-9);
    }

    #[test]
    fn from_f64_text_is_exact() {
        for v in [0.0, 1.0, -3.0, 0.1, 1e300, -2.5e-310] {
            let c = Constant::from_f64(v);
            assert_eq!(
                Constant::parse(c.text()).unwrap().value().to_bits(),
                v.to_bits()
            );
            assert!(c.is_exact_f64());
        }
    }

    #[test]
    fn height_and_vars() {
        let e = RealExpr::mul(
            RealExpr::literal("2"),
            RealExpr::unary(
                UnaryOp::Sin,
                RealExpr::add(RealExpr::var("a"), RealExpr::var("b")),
            ),
        );
        assert_eq!(e.height(), 3);
        assert_eq!(e.free_vars().len(), 2);
        assert!(e.contains_elementary());
    }

    #[test]
    fn display_parenthesizes_right_operands() {
        let e = RealExpr::sub(
            RealExpr::var("a"),
            RealExpr::sub(RealExpr::var("b"), RealExpr::var("c")),
        );
        assert_eq!(e.to_string(), "a - (b - c)");
        let n = RealExpr::mul(RealExpr::neg(RealExpr::var("x")), RealExpr::var("y"));
        assert_eq!(n.to_string(), "-x * y");
        let m = RealExpr::neg(RealExpr::literal("2"));
        assert_eq!(m.to_string(), "-(2)");
    }
}
