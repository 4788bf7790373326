//! Range and worst-case absolute roundoff analysis.
//!
//! Every operation `x ∘ y` is modeled as `(x ∘ y)(1 + e) + d` with
//! `|e| ≤ eps` and `|d| ≤ delta` of the format. Ranges come from interval
//! arithmetic; errors are affine forms so that shared error sources cancel.

mod derivative;
mod maximize;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use derivative::differentiate;
pub use maximize::{bound_abs, DEFAULT_BOX_BUDGET};

use crate::expr::{BinaryOp, RealExpr, UnaryOp};
pub use crate::format::FloatFormat;
use crate::frontend::{Program, Target, PLACEHOLDER};
use crate::numerics::rounding::{add_up, mul_up, sqrt_up};
use crate::numerics::{apply_binary, apply_unary, interval_eval, unary_derivative};
use crate::numerics::{AffineForm, DomainError, Env, Interval, NoiseGen};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("range of `{0}` is not finite")]
    RangeBlowup(String),
    #[error("kernel for `{target}` covers {kernel} but its argument may reach {needed}")]
    KernelDomain {
        target: String,
        kernel: Interval,
        needed: Interval,
    },
}

/// A certified approximation used in place of a target's libm evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    /// Upper bound on |kernel(x) - g(x)| over `domain`, evaluated in binary64.
    pub certified_error: f64,
    pub domain: Interval,
}

/// Error contributed by each elementary call.
#[derive(Debug, Clone, PartialEq)]
pub struct FnErrorModel {
    /// Relative error of libm calls, as a multiple of the format's eps.
    pub libm_ulps: BTreeMap<UnaryOp, f64>,
    /// Targets (by let name) replaced by approximations.
    pub kernels: BTreeMap<Arc<str>, KernelModel>,
}

impl Default for FnErrorModel {
    fn default() -> Self {
        FnErrorModel::libm()
    }
}

impl FnErrorModel {
    /// Every elementary call goes to libm with a relative error of 2 eps.
    pub fn libm() -> FnErrorModel {
        let libm_ulps = [
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Tan,
            UnaryOp::Exp,
            UnaryOp::Log,
        ]
        .into_iter()
        .map(|op| (op, 2.0))
        .collect();
        FnErrorModel {
            libm_ulps,
            kernels: BTreeMap::new(),
        }
    }

    pub fn with_kernel(mut self, name: &str, k: KernelModel) -> FnErrorModel {
        self.kernels.insert(name.into(), k);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBound {
    pub expr: String,
    pub range: Interval,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LetBound {
    pub name: Arc<str>,
    pub range: Interval,
    pub error: f64,
    /// For targets: range and error of the argument as computed.
    pub argument: Option<(Interval, f64)>,
}

impl LetBound {
    /// Every value the computed argument can take.
    pub fn argument_reach(&self) -> Option<Interval> {
        self.argument.map(|(r, e)| r.inflate(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub lets: Vec<LetBound>,
    pub result_range: Interval,
    pub total: f64,
    /// Every distinct subexpression analyzed, in evaluation order.
    pub nodes: Vec<NodeBound>,
}

impl AnalysisResult {
    pub fn let_bound(&self, name: &str) -> Option<&LetBound> {
        self.lets.iter().find(|l| &*l.name == name)
    }
}

struct Analyzer<'a> {
    fmt: FloatFormat,
    fem: &'a FnErrorModel,
    gen: NoiseGen,
    ranges: Env<Interval>,
    errors: Env<AffineForm>,
    memo: HashMap<RealExpr, (Interval, AffineForm)>,
    nodes: Vec<NodeBound>,
}

/// Worst-case absolute roundoff analysis of `p` over its input domain.
pub fn analyze_roundoff(
    p: &Program,
    fmt: FloatFormat,
    fem: &FnErrorModel,
) -> Result<AnalysisResult, AnalysisError> {
    let mut a = Analyzer {
        fmt,
        fem,
        gen: NoiseGen::new(),
        ranges: p.input_box(fmt),
        errors: p
            .params
            .iter()
            .map(|q| (q.name.clone(), AffineForm::zero()))
            .collect(),
        memo: HashMap::new(),
        nodes: Vec::new(),
    };
    let mut lets = Vec::new();
    for l in &p.lets {
        let (range, err, argument) = match (l.target(), fem.kernels.get(&l.name)) {
            (Some(t), Some(k)) => a.kernel_call(&l.name, t, k)?,
            (Some(t), None) => {
                let (ar, ae) = a.node(&t.argument)?;
                let (r, e) = a.node(&l.expr)?;
                (r, e, Some((ar, ae.max_abs())))
            }
            (None, _) => {
                let (r, e) = a.node(&l.expr)?;
                (r, e, None)
            }
        };
        lets.push(LetBound {
            name: l.name.clone(),
            range,
            error: err.max_abs(),
            argument,
        });
        a.ranges.insert(l.name.clone(), range);
        a.errors.insert(l.name.clone(), err);
        // Subexpressions are memoized per binding scope.
        a.memo.clear();
    }
    let (result_range, err) = a.node(&p.result)?;
    Ok(AnalysisResult {
        lets,
        result_range,
        total: err.max_abs(),
        nodes: a.nodes,
    })
}

/// Range and roundoff bound of `e` evaluated in `fmt`, with exact inputs
/// ranging over `inputs`.
pub fn expression_roundoff(
    e: &RealExpr,
    inputs: &Env<Interval>,
    fmt: FloatFormat,
) -> Result<(Interval, f64), AnalysisError> {
    let fem = FnErrorModel::libm();
    let mut a = Analyzer {
        fmt,
        fem: &fem,
        gen: NoiseGen::new(),
        ranges: inputs.clone(),
        errors: inputs
            .keys()
            .map(|k| (k.clone(), AffineForm::zero()))
            .collect(),
        memo: HashMap::new(),
        nodes: Vec::new(),
    };
    let (range, err) = a.node(e)?;
    Ok((range, err.max_abs()))
}

/// `E·y` for y ranging over `r`: the midpoint scales E exactly and the rest
/// goes to a fresh symbol.
fn scale_by_interval(e: &AffineForm, r: &Interval, gen: &mut NoiseGen) -> AffineForm {
    let m = r.mid();
    let mut out = e.scale(m);
    out.add_fresh(mul_up(r.radius_about(m), e.max_abs()), gen);
    out
}

/// Encloses f' over `x` by subdividing.
fn derivative_range(
    df: impl Fn(&Interval) -> Result<Interval, DomainError>,
    x: &Interval,
) -> Result<Interval, DomainError> {
    let mut acc: Option<Interval> = None;
    for piece in x.subdivide(16) {
        let d = df(&piece)?;
        acc = Some(acc.map_or(d, |a| a.hull(&d)));
    }
    Ok(acc.expect("nonempty"))
}

impl Analyzer<'_> {
    fn roundoff(&self, reach: &Interval, rel: f64) -> f64 {
        add_up(
            mul_up(mul_up(rel, self.fmt.eps()), reach.mag()),
            self.fmt.delta(),
        )
    }

    fn node(&mut self, e: &RealExpr) -> Result<(Interval, AffineForm), AnalysisError> {
        if let Some(v) = self.memo.get(e) {
            return Ok(v.clone());
        }
        let (range, err) = match e {
            RealExpr::Const(c) => {
                let range = interval_eval(e, &Env::new())?;
                let single = self.fmt.is_single();
                let exact = if single {
                    c.is_exact_f32()
                } else {
                    c.is_exact_f64()
                };
                let value = if single {
                    c.value32() as f64
                } else {
                    c.value()
                };
                let err = if exact {
                    AffineForm::zero()
                } else {
                    AffineForm::with_fresh(0.0, c.representation_error(single), &mut self.gen)
                };
                (range.hull(&Interval::point(value)), err)
            }
            RealExpr::Var(v) => {
                let r = *self
                    .ranges
                    .get(v)
                    .ok_or_else(|| DomainError::new(format!("unbound variable `{v}`")))?;
                (r, self.errors[v].clone())
            }
            RealExpr::Unary(UnaryOp::Neg, a) => {
                let (r, e) = self.node(a)?;
                (r.neg(), e.neg())
            }
            RealExpr::Unary(op, a) => {
                let (r, ea) = self.node(a)?;
                let reach_in = r.inflate(ea.max_abs());
                let range = apply_unary(*op, &r)?;
                let image = apply_unary(*op, &reach_in)?;
                let mut err = match derivative_range(|x| unary_derivative(*op, x), &reach_in) {
                    Ok(d) => scale_by_interval(&ea, &d, &mut self.gen),
                    // |sqrt(a) - sqrt(b)| <= sqrt(|a - b|) when the slope is unbounded.
                    Err(_) if *op == UnaryOp::Sqrt => {
                        AffineForm::with_fresh(0.0, sqrt_up(ea.max_abs()), &mut self.gen)
                    }
                    Err(d) => return Err(d.into()),
                };
                let rel = match op {
                    UnaryOp::Sqrt => 1.0,
                    _ => *self.fem.libm_ulps.get(op).unwrap_or(&2.0),
                };
                err.add_fresh(self.roundoff(&image, rel), &mut self.gen);
                (range, err)
            }
            RealExpr::Binary(op, l, r) => {
                let (r1, e1) = self.node(l)?;
                let (r2, e2) = self.node(r)?;
                let range = if *op == BinaryOp::Mul && l == r {
                    r1.sqr()
                } else {
                    apply_binary(*op, &r1, &r2)?
                };
                let mut err = match op {
                    BinaryOp::Add => e1.add(&e2),
                    BinaryOp::Sub => e1.sub(&e2),
                    BinaryOp::Mul => {
                        let mut m = scale_by_interval(&e2, &r1, &mut self.gen)
                            .add(&scale_by_interval(&e1, &r2, &mut self.gen));
                        m.add_fresh(mul_up(e1.max_abs(), e2.max_abs()), &mut self.gen);
                        m
                    }
                    BinaryOp::Div => {
                        let denom = r2.inflate(e2.max_abs());
                        let f = denom.recip()?;
                        let q = r1.div(&r2)?;
                        scale_by_interval(&e1, &f, &mut self.gen).sub(&scale_by_interval(
                            &e2,
                            &q.mul(&f),
                            &mut self.gen,
                        ))
                    }
                };
                let reach = range.inflate(err.max_abs());
                err.add_fresh(self.roundoff(&reach, 1.0), &mut self.gen);
                (range, err)
            }
        };
        if !range.is_finite() || !err.max_abs().is_finite() {
            return Err(AnalysisError::RangeBlowup(e.to_string()));
        }
        self.nodes.push(NodeBound {
            expr: e.to_string(),
            range,
            error: err.max_abs(),
        });
        self.memo.insert(e.clone(), (range, err.clone()));
        Ok((range, err))
    }

    /// A target evaluated by a certified kernel: propagate the argument's
    /// error through g, then add the kernel's own error.
    fn kernel_call(
        &mut self,
        name: &str,
        t: &Target,
        k: &KernelModel,
    ) -> Result<(Interval, AffineForm, Option<(Interval, f64)>), AnalysisError> {
        let (ar, ae) = self.node(&t.argument)?;
        let reach = ar.inflate(ae.max_abs());
        if !k.domain.contains_interval(&reach) {
            return Err(AnalysisError::KernelDomain {
                target: name.to_string(),
                kernel: k.domain,
                needed: reach,
            });
        }
        let g = &t.function;
        let dg = differentiate(g, PLACEHOLDER);
        let eval_g = |x: &Interval| interval_eval(g, &crate::numerics::env([(PLACEHOLDER, *x)]));
        let range = eval_g(&ar)?;
        let d = derivative_range(
            |x| interval_eval(&dg, &crate::numerics::env([(PLACEHOLDER, *x)])),
            &reach,
        )?;
        let mut err = scale_by_interval(&ae, &d, &mut self.gen);
        err.add_fresh(k.certified_error, &mut self.gen);
        if self.fmt.is_single() {
            // The binary64 kernel result is rounded to binary32.
            let out = eval_g(&reach)?.inflate(k.certified_error);
            err.add_fresh(self.roundoff(&out, 1.0), &mut self.gen);
        }
        if !range.is_finite() {
            return Err(AnalysisError::RangeBlowup(name.to_string()));
        }
        self.nodes.push(NodeBound {
            expr: name.to_string(),
            range,
            error: err.max_abs(),
        });
        Ok((range, err, Some((ar, ae.max_abs()))))
    }
}

/// Propagation factor of each target: max |∂result/∂vᵢ| over the domain,
/// where later lets that depend on vᵢ are inlined and all other lets are
/// treated as independent variables ranging over their analyzed ranges.
pub fn propagation_factor(
    p: &Program,
    target_index: usize,
    ranges: &AnalysisResult,
    fmt: FloatFormat,
    budget: usize,
) -> Result<f64, DomainError> {
    let v = p.lets[target_index].name.clone();
    let mut e = p.result.clone();
    for l in p.lets[target_index + 1..].iter().rev() {
        if e.mentions(&l.name) && depends_on(p, &l.name, &v) {
            e = e.substitute_one(&l.name, &l.expr);
        }
    }
    let d = differentiate(&e, &v);
    let mut env = p.input_box(fmt);
    for lb in &ranges.lets {
        env.insert(lb.name.clone(), lb.range);
    }
    bound_abs(&d, &env, budget)
}

/// Whether let `name` (transitively) reads `v`.
fn depends_on(p: &Program, name: &str, v: &str) -> bool {
    let Some(idx) = p.lets.iter().position(|l| &*l.name == name) else {
        return false;
    };
    let expr = &p.lets[idx].expr;
    expr.mentions(v)
        || expr
            .free_vars()
            .iter()
            .any(|w| &**w != name && depends_on(p, w, v))
}
