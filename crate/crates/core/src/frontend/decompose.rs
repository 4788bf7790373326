//! Binds every approximation target to a fresh local.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use super::{Let, LetKind, Program, Target, PLACEHOLDER};
use crate::expr::RealExpr;

/// Maximum extra tree height a compound target may add above its innermost
/// elementary call. `Depth::INFINITE` grows as far as univariance allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Depth(pub usize);

impl Depth {
    pub const INFINITE: Depth = Depth(usize::MAX);

    pub fn parse(s: &str) -> Option<Depth> {
        match s {
            "inf" | "infinity" | "∞" => Some(Depth::INFINITE),
            _ => s.parse().ok().map(Depth),
        }
    }
}

impl std::fmt::Display for Depth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == Depth::INFINITE {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

struct State {
    lets: Vec<Let>,
    used: BTreeSet<Arc<str>>,
    counter: usize,
    shared: HashMap<Target, Arc<str>>,
    depth: Depth,
}

/// Rewrites `p` so that each elementary call (or, for `depth > 0`, each
/// maximal univariate compound around one) is bound to a fresh local.
/// Identical targets share one local.
pub fn decompose(p: &Program, depth: Depth) -> Program {
    let mut used: BTreeSet<Arc<str>> = p.params.iter().map(|q| q.name.clone()).collect();
    used.extend(p.lets.iter().map(|l| l.name.clone()));
    let mut st = State {
        lets: Vec::new(),
        used,
        counter: 0,
        shared: HashMap::new(),
        depth,
    };
    for l in &p.lets {
        let expr = st.rewrite(&l.expr);
        st.lets.push(Let {
            name: l.name.clone(),
            expr,
            kind: l.kind.clone(),
        });
    }
    let result = st.rewrite(&p.result);
    Program {
        name: p.name.clone(),
        params: p.params.clone(),
        lets: st.lets,
        result,
        target_error: p.target_error,
    }
}

impl State {
    fn fresh(&mut self) -> Arc<str> {
        loop {
            self.counter += 1;
            let n: Arc<str> = format!("v{}", self.counter).into();
            if self.used.insert(n.clone()) {
                return n;
            }
        }
    }

    /// Replaces the targets inside `e` by locals.
    fn rewrite(&mut self, e: &RealExpr) -> RealExpr {
        let roots = choose_roots(e, self.depth);
        self.rewrite_with(e, &roots)
    }

    fn rewrite_with(
        &mut self,
        e: &RealExpr,
        roots: &HashMap<*const RealExpr, &RealExpr>,
    ) -> RealExpr {
        if let Some(&seed) = roots.get(&(e as *const RealExpr)) {
            let RealExpr::Unary(_, arg) = seed else {
                unreachable!("seeds are calls")
            };
            let u = RealExpr::var(PLACEHOLDER);
            let (function, argument) = if only_inside(e, arg) {
                (e.replace_subtree(arg, &u), self.rewrite_with(arg, roots))
            } else {
                let v = e.free_vars().into_iter().next().expect("univariate root");
                (e.substitute_one(&v, &u), RealExpr::Var(v))
            };
            let target = Target { function, argument };
            if let Some(v) = self.shared.get(&target) {
                return RealExpr::Var(v.clone());
            }
            let name = self.fresh();
            self.shared.insert(target.clone(), name.clone());
            self.lets.push(Let {
                name: name.clone(),
                expr: target.expanded(),
                kind: LetKind::Target(target),
            });
            return RealExpr::Var(name);
        }
        match e {
            RealExpr::Const(_) | RealExpr::Var(_) => e.clone(),
            RealExpr::Unary(op, a) => RealExpr::unary(*op, self.rewrite_with(a, roots)),
            RealExpr::Binary(op, l, r) => RealExpr::binary(
                *op,
                self.rewrite_with(l, roots),
                self.rewrite_with(r, roots),
            ),
        }
    }
}

/// Grows a region upward from each elementary call (innermost first) while
/// the region stays univariate and within the height bound. Returns each
/// region root (by node address) with the call it grew from.
fn choose_roots(e: &RealExpr, depth: Depth) -> HashMap<*const RealExpr, &RealExpr> {
    let mut calls: Vec<(&RealExpr, Vec<&RealExpr>)> = Vec::new();
    let mut stack = Vec::new();
    collect_with_ancestors(e, &mut stack, &mut calls);
    let mut roots: HashMap<*const RealExpr, &RealExpr> = HashMap::new();
    for (call, ancestors) in calls {
        let inside_region = std::iter::once(call)
            .chain(ancestors.iter().copied())
            .any(|n| roots.contains_key(&(n as *const RealExpr)));
        if inside_region {
            continue;
        }
        let RealExpr::Unary(_, arg) = call else {
            unreachable!()
        };
        let limit = call.height().saturating_add(depth.0);
        let mut root = call;
        for &anc in ancestors.iter().rev() {
            let univariate = only_inside(anc, arg) || (depth.0 > 0 && anc.free_vars().len() == 1);
            if anc.height() > limit || !univariate {
                break;
            }
            root = anc;
        }
        roots.insert(root as *const RealExpr, call);
    }
    roots
}

fn collect_with_ancestors<'a>(
    e: &'a RealExpr,
    stack: &mut Vec<&'a RealExpr>,
    out: &mut Vec<(&'a RealExpr, Vec<&'a RealExpr>)>,
) {
    stack.push(e);
    match e {
        RealExpr::Const(_) | RealExpr::Var(_) => {}
        RealExpr::Unary(_, a) => collect_with_ancestors(a, stack, out),
        RealExpr::Binary(_, l, r) => {
            collect_with_ancestors(l, stack, out);
            collect_with_ancestors(r, stack, out);
        }
    }
    stack.pop();
    if let RealExpr::Unary(op, _) = e {
        if op.is_elementary() {
            out.push((e, stack.clone()));
        }
    }
}

/// Whether every variable occurrence in `e` lies inside a copy of `arg`.
fn only_inside(e: &RealExpr, arg: &RealExpr) -> bool {
    if e == arg {
        return true;
    }
    match e {
        RealExpr::Const(_) => true,
        RealExpr::Var(_) => false,
        RealExpr::Unary(_, a) => only_inside(a, arg),
        RealExpr::Binary(_, l, r) => only_inside(l, arg) && only_inside(r, arg),
    }
}
