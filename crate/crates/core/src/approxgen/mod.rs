//! Verified piecewise-polynomial kernels for elementary function calls.
//!
//! For each target the search tries a ladder of degrees. At each degree the
//! (possibly reduced) domain is bisected until every piece admits a minimax
//! fit whose certified error fits the budget; the cheapest result wins.

mod certify;
pub mod reduction;
pub mod remez;
pub mod series;

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::expr::{RealExpr, UnaryOp};
use crate::frontend::PLACEHOLDER;
use crate::numerics::feval::horner;
use crate::numerics::rounding::mul_up;
use crate::numerics::{DomainError, Interval};

pub use certify::{certify, evaluation_error, method_error, Certificate, CertifyError};
pub use reduction::{reduce_argument, Plan, Reduction, SHIFTER};
pub use remez::{fit_minimax, Fit};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(180);
pub const DEFAULT_MAX_PIECES: usize = 64;
/// Pieces narrower than this fraction of the original domain are not split.
const MIN_WIDTH_FRACTION: f64 = 9.5367431640625e-7; // 2^-20
/// A degree is skipped once its cheapest possible cost exceeds this multiple
/// of the best cost found so far.
const STOP_FACTOR: f64 = 1.5;
const SAMPLE_POINTS: usize = 1024;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ApproxError {
    #[error("no degree in {degrees:?} meets {target:e}: {reason}")]
    NoFeasibleApprox {
        degrees: Vec<usize>,
        target: f64,
        reason: String,
    },
    #[error("more than {0} pieces would be needed")]
    SplitLimitExceeded(usize),
    #[error("piece {0} cannot be split further")]
    MinimumWidth(Interval),
    #[error("search timed out")]
    Timeout,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid request: {0}")]
    Invalid(String),
}

impl ApproxError {
    pub fn code(&self) -> &'static str {
        match self {
            ApproxError::SplitLimitExceeded(_) => "SplitLimitExceeded",
            ApproxError::Domain(_) => "DomainError",
            _ => "NoFeasibleApprox",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApproxSpec {
    /// Univariate in [`PLACEHOLDER`].
    pub function: RealExpr,
    pub domain: Interval,
    pub target: f64,
    pub degrees: Vec<usize>,
    pub timeout: Duration,
    pub max_pieces: usize,
}

impl ApproxSpec {
    pub fn new(function: RealExpr, domain: Interval, target: f64) -> ApproxSpec {
        let degrees = degree_candidates(&function);
        ApproxSpec {
            function,
            domain,
            target,
            degrees,
            timeout: DEFAULT_TIMEOUT,
            max_pieces: DEFAULT_MAX_PIECES,
        }
    }

    fn validate(&self) -> Result<(), ApproxError> {
        if !self.domain.is_finite() {
            return Err(ApproxError::Invalid(format!(
                "domain {} is not finite",
                self.domain
            )));
        }
        if !(self.target > 0.0) {
            return Err(ApproxError::Invalid(format!(
                "target {:e} is not positive",
                self.target
            )));
        }
        if self.degrees.is_empty() || self.degrees.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ApproxError::Invalid(format!(
                "degree list {:?} must be ascending",
                self.degrees
            )));
        }
        if let Some(v) = self
            .function
            .free_vars()
            .into_iter()
            .find(|v| &**v != PLACEHOLDER)
        {
            return Err(ApproxError::Invalid(format!("function depends on `{v}`")));
        }
        Ok(())
    }
}

/// Candidate degrees: trigonometric targets need the high set.
pub fn degree_candidates(f: &RealExpr) -> Vec<usize> {
    if f.any_unary(|op| matches!(op, UnaryOp::Sin | UnaryOp::Cos)) {
        vec![12, 16, 20, 24]
    } else {
        vec![4, 8, 12, 16]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    pub domain: Interval,
    pub center: f64,
    /// In `t = x - center`, increasing degree.
    pub coeffs: Vec<f64>,
    pub certified_error: f64,
}

impl Piece {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = if self.center == 0.0 {
            x
        } else {
            x - self.center
        };
        horner(&self.coeffs, t)
    }
}

/// The Horner scheme of a piece as an expression in the placeholder.
pub fn horner_expr(coeffs: &[f64], center: f64) -> RealExpr {
    let x = RealExpr::var(PLACEHOLDER);
    let t = if center == 0.0 {
        x
    } else {
        RealExpr::sub(x, RealExpr::constant(center))
    };
    let mut rev = coeffs.iter().rev();
    let mut acc = RealExpr::constant(*rev.next().unwrap_or(&0.0));
    for &c in rev {
        acc = RealExpr::add(RealExpr::constant(c), RealExpr::mul(t.clone(), acc));
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxImpl {
    #[serde(serialize_with = "display")]
    pub function: RealExpr,
    pub domain: Interval,
    pub reduction: Reduction,
    pub fit_domain: Interval,
    pub pieces: Vec<Piece>,
    pub degree: usize,
    pub certified_error: f64,
    pub cost: u32,
}

fn display<S: serde::Serializer>(e: &RealExpr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

impl ApproxImpl {
    /// Strict binary64 evaluation, mirroring the emitted C.
    pub fn eval(&self, x: f64) -> f64 {
        self.reduction.apply(x, |r| self.eval_pieces(r))
    }

    /// The if-else chain over pieces, without reduction.
    pub fn eval_pieces(&self, r: f64) -> f64 {
        let (last, rest) = self.pieces.split_last().expect("at least one piece");
        for p in rest {
            if r <= p.domain.hi {
                return p.eval(r);
            }
        }
        last.eval(r)
    }
}

/// Weighted operation count on the worst-case path.
pub fn cost_estimate(reduction: &Reduction, pieces: &[Piece]) -> u32 {
    let degree = pieces.iter().map(Piece::degree).max().unwrap_or(0) as u32;
    let shift = u32::from(pieces.iter().any(|p| p.center != 0.0));
    let branches = pieces.len().saturating_sub(1) as u32;
    2 * degree + shift + 4 * branches + reduction.cost()
}

fn piece_center(dom: Interval) -> f64 {
    if dom.contains(0.0) && dom.lo == -dom.hi {
        0.0
    } else {
        dom.mid()
    }
}

struct Splitter<'a> {
    f: &'a RealExpr,
    degree: usize,
    target: f64,
    min_width: f64,
    max_pieces: usize,
    deadline: Instant,
}

impl Splitter<'_> {
    fn try_piece(&self, dom: Interval) -> Result<Option<Piece>, ApproxError> {
        let center = piece_center(dom);
        let fit = fit_minimax(self.f, self.degree, dom, center)?;
        let pts = if dom.lo == dom.hi {
            vec![dom.lo]
        } else {
            remez::sample_points(dom, SAMPLE_POINTS)
        };
        let sampled =
            remez::sampled_error(self.f, &fit.coeffs, fit.center, &pts)?.max(fit.sampled_error);
        if sampled > self.target {
            return Ok(None);
        }
        match certify(
            self.f,
            &fit.coeffs,
            fit.center,
            dom,
            sampled,
            Some(self.deadline),
        ) {
            Ok(c) if c.total() <= self.target => Ok(Some(Piece {
                domain: dom,
                center: fit.center,
                coeffs: fit.coeffs,
                certified_error: c.total(),
            })),
            Ok(_) | Err(CertifyError::TooWide { .. }) => Ok(None),
            Err(CertifyError::Timeout) => Err(ApproxError::Timeout),
            Err(CertifyError::Domain(e)) => Err(e.into()),
        }
    }

    fn build(&self, dom: Interval, out: &mut Vec<Piece>) -> Result<(), ApproxError> {
        if Instant::now() >= self.deadline {
            return Err(ApproxError::Timeout);
        }
        if let Some(p) = self.try_piece(dom)? {
            if out.len() >= self.max_pieces {
                return Err(ApproxError::SplitLimitExceeded(self.max_pieces));
            }
            out.push(p);
            return Ok(());
        }
        let m = dom.mid();
        if dom.width() < 2.0 * self.min_width || m <= dom.lo || m >= dom.hi {
            return Err(ApproxError::MinimumWidth(dom));
        }
        if out.len() + 2 > self.max_pieces {
            return Err(ApproxError::SplitLimitExceeded(self.max_pieces));
        }
        self.build(Interval::new(dom.lo, m), out)?;
        self.build(Interval::new(m, dom.hi), out)
    }
}

/// Pieces of degree at most `degree` covering `dom`, each certified to
/// `target`, in ascending order. Splits only where a single fit fails.
pub fn split_domain(
    f: &RealExpr,
    dom: Interval,
    degree: usize,
    target: f64,
    max_pieces: usize,
    deadline: Instant,
) -> Result<Vec<Piece>, ApproxError> {
    let s = Splitter {
        f,
        degree,
        target,
        min_width: dom.width() * MIN_WIDTH_FRACTION,
        max_pieces,
        deadline,
    };
    let mut out = Vec::new();
    s.build(dom, &mut out)?;
    Ok(out)
}

/// Builds the implementation for one degree given the reduction plan.
fn implement(
    spec: &ApproxSpec,
    plan: &Plan,
    inner: f64,
    degree: usize,
) -> Result<ApproxImpl, ApproxError> {
    let deadline = Instant::now() + spec.timeout;
    let pieces = split_domain(
        &spec.function,
        plan.fit_domain,
        degree,
        inner,
        spec.max_pieces,
        deadline,
    )?;
    let worst = pieces.iter().map(|p| p.certified_error).fold(0.0, f64::max);
    let certified_error = plan.total_error(worst);
    if certified_error > spec.target {
        return Err(ApproxError::NoFeasibleApprox {
            degrees: vec![degree],
            target: spec.target,
            reason: format!("reconstruction raises {worst:e} to {certified_error:e}"),
        });
    }
    let cost = cost_estimate(&plan.reduction, &pieces);
    Ok(ApproxImpl {
        function: spec.function.clone(),
        domain: spec.domain,
        reduction: plan.reduction,
        fit_domain: plan.fit_domain,
        pieces,
        degree,
        certified_error,
        cost,
    })
}

/// Linear search over the candidate degrees, keeping the cheapest
/// certified implementation.
pub fn search_degree(spec: &ApproxSpec) -> Result<ApproxImpl, ApproxError> {
    spec.validate()?;
    let plan = reduce_argument(&spec.function, spec.domain);
    let infeasible = |reason: String| ApproxError::NoFeasibleApprox {
        degrees: spec.degrees.clone(),
        target: spec.target,
        reason,
    };
    let inner = plan
        .inner_target(spec.target)
        .ok_or_else(|| infeasible("reduction error exceeds target".into()))?;
    let mut best: Option<ApproxImpl> = None;
    let mut failures = Vec::new();
    for &d in &spec.degrees {
        if let Some(b) = &best {
            let floor = 2 * d as u32 + plan.reduction.cost();
            if f64::from(floor) > STOP_FACTOR * f64::from(b.cost) {
                break;
            }
        }
        match implement(spec, &plan, inner, d) {
            Ok(imp) => {
                if best.as_ref().is_none_or(|b| imp.cost < b.cost) {
                    best = Some(imp);
                }
            }
            Err(e @ ApproxError::Domain(_)) | Err(e @ ApproxError::Invalid(_)) => return Err(e),
            Err(e) => failures.push(e),
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    if !failures.is_empty()
        && failures
            .iter()
            .all(|e| matches!(e, ApproxError::SplitLimitExceeded(_)))
    {
        return Err(ApproxError::SplitLimitExceeded(spec.max_pieces));
    }
    let reasons: Vec<String> = spec
        .degrees
        .iter()
        .zip(&failures)
        .map(|(d, e)| format!("degree {d}: {e}"))
        .collect();
    Err(infeasible(reasons.join("; ")))
}

/// A safe target for tests and callers that only need a scale: the width of
/// f's range, below which a constant already suffices.
pub fn trivial_bound(f: &RealExpr, dom: Interval) -> Result<f64, DomainError> {
    let mut env = crate::numerics::Env::new();
    env.insert(PLACEHOLDER.into(), dom);
    let r = crate::numerics::interval_eval(f, &env)?;
    Ok(mul_up(r.width(), 0.5))
}
