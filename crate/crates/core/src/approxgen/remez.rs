//! Minimax polynomial fitting by the Remez exchange algorithm.

use std::sync::Arc;

use rug::Float;

use crate::expr::RealExpr;
use crate::frontend::PLACEHOLDER;
use crate::numerics::bigreal::{reference_eval, REF_PREC};
use crate::numerics::{DomainError, Env, Interval};

const PREC: u32 = 160;
const MAX_ITERATIONS: usize = 64;
const TOLERANCE: f64 = 1e-3;
const GOLDEN_STEPS: usize = 40;

/// A polynomial in `t = x - center`, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub coeffs: Vec<f64>,
    pub center: f64,
    /// Largest |f - p| seen on the sampling grid, with the rounded coefficients.
    pub sampled_error: f64,
    pub converged: bool,
}

struct Problem<'a> {
    f: &'a RealExpr,
    var: Arc<str>,
    mid: Float,
    half: Float,
}

impl Problem<'_> {
    fn x_at(&self, u: f64) -> Float {
        Float::with_val(REF_PREC, &self.half * u) + &self.mid
    }

    fn f_at(&self, x: Float) -> Result<Float, DomainError> {
        let mut env = Env::new();
        env.insert(self.var.clone(), x);
        reference_eval(self.f, &env)
    }

    /// f(x(u)) - q(u) for `q` in the scaled variable.
    fn error(&self, q: &[Float], u: f64) -> Result<Float, DomainError> {
        let fx = self.f_at(self.x_at(u))?;
        Ok(fx - horner(q, &Float::with_val(PREC, u)))
    }
}

fn horner(q: &[Float], u: &Float) -> Float {
    let mut acc = Float::with_val(PREC, 0);
    for c in q.iter().rev() {
        acc *= u;
        acc += c;
    }
    acc
}

/// Solves the (n+2)-point levelled interpolation problem; returns the
/// coefficients and the levelled error.
fn solve_reference(
    p: &Problem,
    nodes: &[f64],
    n: usize,
) -> Result<(Vec<Float>, Float), DomainError> {
    let m = n + 2;
    let mut a: Vec<Vec<Float>> = Vec::with_capacity(m);
    for (i, &u) in nodes.iter().enumerate() {
        let uf = Float::with_val(PREC, u);
        let mut row = Vec::with_capacity(m + 1);
        let mut pw = Float::with_val(PREC, 1);
        for _ in 0..=n {
            row.push(pw.clone());
            pw *= &uf;
        }
        row.push(Float::with_val(PREC, if i % 2 == 0 { 1 } else { -1 }));
        row.push(Float::with_val(PREC, p.f_at(p.x_at(u))?));
        a.push(row);
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| {
                a[i][col]
                    .clone()
                    .abs()
                    .partial_cmp(&a[j][col].clone().abs())
                    .unwrap()
            })
            .unwrap();
        a.swap(col, piv);
        if a[col][col].is_zero() {
            return Err(DomainError::new("singular Remez system"));
        }
        for r in col + 1..m {
            let factor = Float::with_val(PREC, &a[r][col] / &a[col][col]);
            for k in col..=m {
                let t = Float::with_val(PREC, &factor * &a[col][k]);
                a[r][k] -= t;
            }
        }
    }
    let mut x = vec![Float::with_val(PREC, 0); m];
    for r in (0..m).rev() {
        let mut acc = a[r][m].clone();
        for k in r + 1..m {
            acc -= Float::with_val(PREC, &a[r][k] * &x[k]);
        }
        x[r] = acc / &a[r][r];
    }
    let e = x.pop().unwrap();
    Ok((x, e))
}

fn golden_max(
    p: &Problem,
    q: &[Float],
    mut lo: f64,
    mut hi: f64,
) -> Result<(f64, Float), DomainError> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = p.error(q, x1)?.abs();
    let mut f2 = p.error(q, x2)?.abs();
    for _ in 0..GOLDEN_STEPS {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = p.error(q, x1)?.abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = p.error(q, x2)?.abs();
        }
    }
    let u = 0.5 * (lo + hi);
    Ok((u, p.error(q, u)?))
}

/// Alternating local extrema of the error on a Chebyshev-spaced grid.
fn extrema(p: &Problem, q: &[Float], n: usize) -> Result<Vec<(f64, Float)>, DomainError> {
    let count = 16 * (n + 2);
    let grid: Vec<f64> = (0..count)
        .map(|j| -(std::f64::consts::PI * j as f64 / (count - 1) as f64).cos())
        .map(|u| u.clamp(-1.0, 1.0))
        .collect();
    let values: Vec<Float> = grid
        .iter()
        .map(|&u| p.error(q, u))
        .collect::<Result<_, _>>()?;
    let mut runs: Vec<(usize, bool)> = Vec::new();
    let mut sign = !values[0].is_sign_negative();
    let mut best = 0;
    for j in 1..count {
        let s = if values[j].is_zero() {
            sign
        } else {
            !values[j].is_sign_negative()
        };
        if s != sign {
            runs.push((best, sign));
            sign = s;
            best = j;
        } else if values[j].clone().abs() > values[best].clone().abs() {
            best = j;
        }
    }
    runs.push((best, sign));
    let mut out = Vec::with_capacity(runs.len());
    for (j, _) in runs {
        let lo = grid[j.saturating_sub(1)];
        let hi = grid[(j + 1).min(count - 1)];
        let (u, v) = golden_max(p, q, lo, hi)?;
        if v.clone().abs() > values[j].clone().abs()
            && (v.is_sign_negative() == values[j].is_sign_negative())
        {
            out.push((u, v));
        } else {
            out.push((grid[j], values[j].clone()));
        }
    }
    Ok(out)
}

/// Drops extrema until exactly `m` remain, keeping the alternation and the
/// largest deviations.
fn trim(mut ext: Vec<(f64, Float)>, m: usize) -> Vec<(f64, Float)> {
    while ext.len() > m {
        let last = ext.len() - 1;
        if ext.len() == m + 1 {
            if ext[0].1.clone().abs() < ext[last].1.clone().abs() {
                ext.remove(0);
            } else {
                ext.pop();
            }
            continue;
        }
        let i = (0..ext.len())
            .min_by(|&a, &b| {
                ext[a]
                    .1
                    .clone()
                    .abs()
                    .partial_cmp(&ext[b].1.clone().abs())
                    .unwrap()
            })
            .unwrap();
        if i == 0 || i == last {
            ext.remove(i);
        } else {
            let j = if ext[i - 1].1.clone().abs() < ext[i + 1].1.clone().abs() {
                i - 1
            } else {
                i + 1
            };
            ext.remove(i.max(j));
            ext.remove(i.min(j));
        }
    }
    ext
}

/// Expands q((t - alpha) / beta) into coefficients in t.
fn to_shifted(q: &[Float], alpha: &Float, beta: &Float) -> Vec<Float> {
    let n = q.len();
    let mut out = vec![Float::with_val(PREC, 0); n];
    // pw holds the coefficients of ((t - alpha) / beta)^k.
    let mut pw = vec![Float::with_val(PREC, 1)];
    let lin0 = -Float::with_val(PREC, alpha / beta);
    let lin1 = Float::with_val(PREC, 1 / beta);
    for (k, qk) in q.iter().enumerate() {
        for (j, c) in pw.iter().enumerate() {
            out[j] += Float::with_val(PREC, qk * c);
        }
        if k + 1 < n {
            let mut next = vec![Float::with_val(PREC, 0); pw.len() + 1];
            for (j, c) in pw.iter().enumerate() {
                next[j] += Float::with_val(PREC, c * &lin0);
                next[j + 1] += Float::with_val(PREC, c * &lin1);
            }
            pw = next;
        }
    }
    out
}

/// Largest |f(x) - p(x - center)| at `points`, evaluated exactly for the
/// binary64 coefficients.
pub fn sampled_error(
    f: &RealExpr,
    coeffs: &[f64],
    center: f64,
    points: &[f64],
) -> Result<f64, DomainError> {
    let var: Arc<str> = PLACEHOLDER.into();
    let mut worst: f64 = 0.0;
    for &x in points {
        let mut env = Env::new();
        env.insert(var.clone(), Float::with_val(REF_PREC, x));
        let fx = reference_eval(f, &env)?;
        let t = Float::with_val(REF_PREC, Float::with_val(REF_PREC, x) - center);
        let mut p = Float::with_val(REF_PREC, 0);
        for c in coeffs.iter().rev() {
            p *= &t;
            p += *c;
        }
        worst = worst.max((fx - p).abs().to_f64_round(rug::float::Round::Up));
    }
    Ok(worst)
}

/// Sampling grid for `dom` used to estimate the method error.
pub fn sample_points(dom: Interval, count: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..count)
        .map(|j| {
            let u = -(std::f64::consts::PI * j as f64 / (count - 1) as f64).cos();
            (dom.mid() + 0.5 * (dom.hi - dom.lo) * u).clamp(dom.lo, dom.hi)
        })
        .collect();
    pts[0] = dom.lo;
    pts[count - 1] = dom.hi;
    pts
}

/// Degree-`n` minimax approximation of `f` (univariate in the placeholder)
/// over `dom`, expressed around `center`.
pub fn fit_minimax(f: &RealExpr, n: usize, dom: Interval, center: f64) -> Result<Fit, DomainError> {
    let var: Arc<str> = PLACEHOLDER.into();
    if dom.lo == dom.hi {
        let mut env = Env::new();
        env.insert(var, Float::with_val(REF_PREC, dom.lo));
        let v = reference_eval(f, &env)?.to_f64();
        let coeffs = vec![v];
        let err = sampled_error(f, &coeffs, dom.lo, &[dom.lo])?;
        return Ok(Fit {
            coeffs,
            center: dom.lo,
            sampled_error: err,
            converged: true,
        });
    }
    let mid = Float::with_val(REF_PREC, Float::with_val(REF_PREC, dom.lo) + dom.hi) / 2u32;
    let half = Float::with_val(REF_PREC, Float::with_val(REF_PREC, dom.hi) - dom.lo) / 2u32;
    let p = Problem {
        f,
        var,
        mid: mid.clone(),
        half: half.clone(),
    };
    let m = n + 2;
    let mut nodes: Vec<f64> = (0..m)
        .map(|i| -(std::f64::consts::PI * i as f64 / (m - 1) as f64).cos())
        .collect();
    let mut best: Option<(Vec<Float>, Float)> = None;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let (q, _) = solve_reference(&p, &nodes, n)?;
        let ext = extrema(&p, &q, n)?;
        let max_dev = ext
            .iter()
            .map(|(_, v)| v.clone().abs())
            .fold(Float::with_val(PREC, 0), |a, b| a.max(&b));
        if best.as_ref().is_none_or(|(_, e)| max_dev < *e) {
            best = Some((q.clone(), max_dev.clone()));
        }
        if ext.len() < m {
            break;
        }
        let ext = trim(ext, m);
        let min_dev = ext
            .iter()
            .map(|(_, v)| v.clone().abs())
            .fold(max_dev.clone(), |a, b| a.min(&b));
        let spread = Float::with_val(64, &max_dev - &min_dev) / Float::with_val(64, &max_dev);
        nodes = ext.iter().map(|(u, _)| *u).collect();
        if max_dev.is_zero() || spread.to_f64() < TOLERANCE {
            converged = true;
            let (q, _) = solve_reference(&p, &nodes, n)?;
            let (_, e) = best.as_ref().unwrap();
            if let Ok(ext) = extrema(&p, &q, n) {
                let dev = ext
                    .iter()
                    .map(|(_, v)| v.clone().abs())
                    .fold(Float::with_val(PREC, 0), |a, b| a.max(&b));
                if dev < *e {
                    best = Some((q, dev));
                }
            }
            break;
        }
    }
    let (q, _) = best.expect("at least one iteration");
    let center = center.clamp(dom.lo, dom.hi);
    let alpha = Float::with_val(PREC, &mid - center);
    let coeffs: Vec<f64> = to_shifted(&q, &alpha, &Float::with_val(PREC, &half))
        .iter()
        .map(Float::to_f64)
        .collect();
    let err = sampled_error(f, &coeffs, center, &sample_points(dom, 16 * (n + 2)))?;
    Ok(Fit {
        coeffs,
        center,
        sampled_error: err,
        converged,
    })
}
