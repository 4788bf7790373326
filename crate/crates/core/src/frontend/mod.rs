//! Programs in the Real DSL: parsing, printing and call decomposition.

mod decompose;
mod parser;

use std::fmt;
use std::sync::Arc;

use rug::float::Round;

pub use decompose::{decompose, Depth};
pub use parser::{parse_program, ParseError, ParseErrorKind};

use crate::expr::{Constant, RealExpr, UnaryOp};
use crate::format::FloatFormat;
use crate::numerics::{Env, Interval};

/// Name of the formal argument in a target's function body.
pub const PLACEHOLDER: &str = "_u";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: Arc<str>,
    pub lo: Constant,
    pub hi: Constant,
}

impl Param {
    /// The input values representable in `fmt` that lie in the real domain.
    pub fn domain(&self, fmt: FloatFormat) -> Interval {
        let lo = self.lo.to_float(1100);
        let hi = self.hi.to_float(1100);
        match fmt {
            FloatFormat::Binary64 => {
                Interval::new(lo.to_f64_round(Round::Up), hi.to_f64_round(Round::Down))
            }
            FloatFormat::Binary32 => Interval::new(
                lo.to_f32_round(Round::Up) as f64,
                hi.to_f32_round(Round::Down) as f64,
            ),
        }
    }
}

/// What an approximation target computes: `function` evaluated at `argument`,
/// where `function` is univariate in [`PLACEHOLDER`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Target {
    pub function: RealExpr,
    pub argument: RealExpr,
}

impl Target {
    /// The body with the argument substituted back in.
    pub fn expanded(&self) -> RealExpr {
        self.function.substitute_one(PLACEHOLDER, &self.argument)
    }

    /// Single elementary head applied directly to the placeholder, if any.
    pub fn head(&self) -> Option<UnaryOp> {
        match &self.function {
            RealExpr::Unary(op, a) if op.is_elementary() && **a == RealExpr::var(PLACEHOLDER) => {
                Some(*op)
            }
            _ => None,
        }
    }

    pub fn contains_trig(&self) -> bool {
        self.function
            .any_unary(|op| matches!(op, UnaryOp::Sin | UnaryOp::Cos))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LetKind {
    User,
    Target(Target),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Let {
    pub name: Arc<str>,
    pub expr: RealExpr,
    pub kind: LetKind,
}

impl Let {
    pub fn target(&self) -> Option<&Target> {
        match &self.kind {
            LetKind::Target(t) => Some(t),
            LetKind::User => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub params: Vec<Param>,
    pub lets: Vec<Let>,
    pub result: RealExpr,
    pub target_error: Option<f64>,
}

impl Program {
    pub fn input_box(&self, fmt: FloatFormat) -> Env<Interval> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.domain(fmt)))
            .collect()
    }

    /// The result expression with every let inlined.
    pub fn inlined(&self) -> RealExpr {
        let mut e = self.result.clone();
        for l in self.lets.iter().rev() {
            e = e.substitute_one(&l.name, &l.expr);
        }
        e
    }

    pub fn targets(&self) -> impl Iterator<Item = (usize, &Let, &Target)> {
        self.lets
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.target().map(|t| (i, l, t)))
    }

    pub fn contains_elementary(&self) -> bool {
        self.result.contains_elementary() || self.lets.iter().any(|l| l.expr.contains_elementary())
    }

    pub fn is_name_used(&self, name: &str) -> bool {
        self.params.iter().any(|p| &*p.name == name) || self.lets.iter().any(|l| &*l.name == name)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}: Real", p.name))
            .collect();
        writeln!(f, "def {}({}): Real = {{", self.name, params.join(", "))?;
        if !self.params.is_empty() {
            let conds: Vec<String> = self
                .params
                .iter()
                .map(|p| format!("{} <= {} && {} <= {}", p.lo, p.name, p.name, p.hi))
                .collect();
            writeln!(f, "  require({})", conds.join(" && "))?;
        }
        for l in &self.lets {
            writeln!(f, "  val {}: Real = {}", l.name, l.expr)?;
        }
        writeln!(f, "  {}", self.result)?;
        match self.target_error {
            Some(t) => writeln!(f, "}} ensuring(res => res +/- {t:e})"),
            None => writeln!(f, "}}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domains_round_inward() {
        let p =
            parse_program("def f(x: Real): Real = { require(-3.14 <= x && x <= 3.14) x }").unwrap();
        let d = p.params[0].domain(FloatFormat::Binary64);
        assert!(d.lo >= -3.14 && d.hi <= 3.14);
        // The double nearest 3.14 lies above it, so it is excluded.
        assert_eq!(d.hi, 3.14f64.next_down());
        let d32 = p.params[0].domain(FloatFormat::Binary32);
        assert!(d32.hi < 3.14 && d32.hi as f32 as f64 == d32.hi);
    }
}
