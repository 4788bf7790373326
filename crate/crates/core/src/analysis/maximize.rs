//! Rigorous upper bounds on max |e| over a box by branch and bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::expr::RealExpr;
use crate::numerics::{interval_eval, DomainError, Env, Interval};

pub const DEFAULT_BOX_BUDGET: usize = 1024;

struct Node {
    upper: f64,
    seq: usize,
    boxed: Env<Interval>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Largest upper bound first; among equals, the oldest box.
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .total_cmp(&other.upper)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn box_mid(b: &Env<Interval>) -> Env<Interval> {
    b.iter()
        .map(|(k, v)| (k.clone(), Interval::point(v.mid())))
        .collect()
}

/// Returns M ≥ max over the box of |e|. Boxes are split along their widest
/// variable (first in name order on ties) until `budget` boxes have been
/// evaluated. The result never increases with the budget.
pub fn bound_abs(e: &RealExpr, env: &Env<Interval>, budget: usize) -> Result<f64, DomainError> {
    let vars: Vec<Arc<str>> = e.free_vars().into_iter().collect();
    for v in &vars {
        if !env.contains_key(v) {
            return Err(DomainError::new(format!("unbound variable `{v}`")));
        }
    }
    let root: Env<Interval> = vars.iter().map(|v| (v.clone(), env[v])).collect();
    let eval_upper = |b: &Env<Interval>| match interval_eval(e, b) {
        Ok(r) => r.mag(),
        Err(_) => f64::INFINITY,
    };
    let eval_lower = |b: &Env<Interval>| {
        interval_eval(e, &box_mid(b))
            .map(|r| r.mig())
            .unwrap_or(0.0)
    };

    let mut lower = eval_lower(&root);
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        upper: eval_upper(&root),
        seq,
        boxed: root,
    });
    let mut evaluated = 1usize;
    while evaluated + 2 <= budget.max(1) {
        let top = heap.peek().expect("heap never empties");
        if top.upper <= lower {
            break;
        }
        let node = heap.pop().unwrap();
        let Some(split_var) = widest(&node.boxed) else {
            heap.push(node);
            break;
        };
        let (a, b) = node.boxed[&split_var].split();
        for half in [a, b] {
            let mut child = node.boxed.clone();
            child.insert(split_var.clone(), half);
            // Inclusion monotonicity: a child never exceeds its parent.
            let upper = eval_upper(&child).min(node.upper);
            lower = lower.max(eval_lower(&child));
            seq += 1;
            heap.push(Node {
                upper,
                seq,
                boxed: child,
            });
        }
        evaluated += 2;
    }
    let best = heap.peek().map(|n| n.upper).unwrap_or(0.0).max(lower);
    if !best.is_finite() {
        return Err(DomainError::new(format!(
            "cannot bound `{e}` over the domain"
        )));
    }
    Ok(best)
}

fn widest(b: &Env<Interval>) -> Option<Arc<str>> {
    let mut best: Option<(&Arc<str>, f64)> = None;
    for (k, v) in b {
        let w = v.width();
        if w > 0.0 && v.mid() > v.lo && v.mid() < v.hi && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((k, w));
        }
    }
    best.map(|(k, _)| k.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::env;

    fn cos_x() -> RealExpr {
        RealExpr::unary(crate::expr::UnaryOp::Cos, RealExpr::var("x"))
    }

    #[test]
    fn constant() {
        assert_eq!(
            bound_abs(&RealExpr::literal("2.5"), &Env::new(), 16).unwrap(),
            2.5
        );
    }

    #[test]
    fn cosine_peak() {
        let m = bound_abs(
            &cos_x(),
            &env([("x", Interval::new(-3.14, 3.14))]),
            DEFAULT_BOX_BUDGET,
        )
        .unwrap();
        assert!((1.0..=1.0 + 1e-9).contains(&m));
    }

    #[test]
    fn forward_kinematics_derivative() {
        let t1 = RealExpr::var("t1");
        let t2 = RealExpr::var("t2");
        let e = RealExpr::add(
            RealExpr::mul(
                RealExpr::literal("0.5"),
                RealExpr::unary(crate::expr::UnaryOp::Cos, t1.clone()),
            ),
            RealExpr::mul(
                RealExpr::literal("2.5"),
                RealExpr::unary(crate::expr::UnaryOp::Cos, RealExpr::add(t1, t2)),
            ),
        );
        let b = env([
            ("t1", Interval::new(-3.14, 3.14)),
            ("t2", Interval::new(-3.14, 3.14)),
        ]);
        let m = bound_abs(&e, &b, DEFAULT_BOX_BUDGET).unwrap();
        // Dense-grid oracle: the maximum 3.0 is attained at t1 = t2 = 0.
        let mut grid_max: f64 = 0.0;
        for i in 0..=400 {
            for j in 0..=400 {
                let a = -3.14 + 6.28 * i as f64 / 400.0;
                let c = -3.14 + 6.28 * j as f64 / 400.0;
                grid_max = grid_max.max((0.5 * a.cos() + 2.5 * (a + c).cos()).abs());
            }
        }
        assert!((grid_max - 3.0).abs() < 1e-12);
        assert!(m >= grid_max && m <= 3.3, "{m}");
    }

    #[test]
    fn monotone_in_budget() {
        let e = RealExpr::mul(RealExpr::var("x"), cos_x());
        let b = env([("x", Interval::new(-4.0, 3.0))]);
        let mut prev = f64::INFINITY;
        for budget in [1, 2, 4, 8, 32, 128, 1024] {
            let m = bound_abs(&e, &b, budget).unwrap();
            assert!(m <= prev);
            prev = m;
        }
    }

    #[test]
    fn domain_error_when_singularity_is_inside() {
        let e = RealExpr::div(RealExpr::literal("1"), RealExpr::var("x"));
        assert!(bound_abs(&e, &env([("x", Interval::new(-1.0, 1.0))]), 64).is_err());
    }
}
