//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use approxcc::analysis::{analyze_roundoff, differentiate, FloatFormat, FnErrorModel};
use approxcc::approxgen::{
    cost_estimate, search_degree, ApproxError, ApproxSpec, Piece, Reduction,
};
use approxcc::bench::{kept_count, sample_inputs, summarize, Timer, DEFAULT_RUNS, DEFAULT_SAMPLES};
use approxcc::budget::Distribution;
use approxcc::expr::{BinaryOp, RealExpr, UnaryOp};
use approxcc::frontend::{decompose, parse_program, Depth, Program, PLACEHOLDER};
use approxcc::numerics::affine::affine_eval;
use approxcc::numerics::bigreal::{abs_diff_up, reference_eval, reference_eval_f64, REF_PREC};
use approxcc::numerics::{interval_eval, AffineForm, Env, Interval, NoiseGen};
use approxcc::pipeline::{
    collect_inputs, run_batch, run_source, ErrorScale, Mode, Reason, Report, ToolConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;

type Check = Result<String, String>;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn corpus() -> Vec<Program> {
    collect_inputs(&[corpus_dir()])
        .unwrap()
        .iter()
        .map(|f| parse_program(&std::fs::read_to_string(f).unwrap()).unwrap())
        .collect()
}

fn load(name: &str) -> Program {
    parse_program(&std::fs::read_to_string(corpus_dir().join(format!("{name}.real"))).unwrap())
        .unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sweep_config(scale: ErrorScale) -> ToolConfig {
    ToolConfig {
        error_scale: scale,
        accuracy_samples: 100_000,
        seed: 0,
        ..Default::default()
    }
}

/// Either a fail-closed entry or sampled ≤ final bound ≤ τ.
fn soundness(reports: &[(ErrorScale, Report)]) -> Check {
    let (mut ok, mut closed) = (0, 0);
    let mut worst: f64 = 0.0;
    for (scale, r) in reports {
        ensure(r.benchmarks.len() == 21, || {
            format!("{scale:?}: {} benchmarks", r.benchmarks.len())
        })?;
        for b in &r.benchmarks {
            if !b.ok {
                ensure(b.emitted.is_none(), || {
                    format!("{} {scale:?} failed but emitted code", b.name)
                })?;
                ensure(
                    b.reason
                        .is_some_and(|r| r != Reason::InternalError && r != Reason::ParseError),
                    || format!("{} {scale:?}: {:?} {:?}", b.name, b.reason, b.message),
                )?;
                closed += 1;
                continue;
            }
            let (Some(bound), Some(tau), Some(acc)) =
                (b.final_bound, b.target, b.accuracy.as_ref())
            else {
                return Err(format!("{} {scale:?}: incomplete report", b.name));
            };
            ensure(acc.samples == 100_000, || {
                format!("{}: {} samples", b.name, acc.samples)
            })?;
            ensure(acc.sampled_max <= bound && bound <= tau, || {
                format!(
                    "{} {scale:?}: sampled {:e}, bound {bound:e}, target {tau:e}",
                    b.name, acc.sampled_max
                )
            })?;
            worst = worst.max(acc.sampled_max / bound);
            ok += 1;
        }
    }
    Ok(format!(
        "{ok} implementations verified, {closed} fail-closed, max sampled/bound {worst:.3}"
    ))
}

fn libm_fidelity() -> Check {
    let mut parts = vec![];
    for (name, published) in [
        ("forwardk2jY", 3.44e-15),
        ("xu1", 6.86e-15),
        ("pendulum1", 4.61e-16),
        ("sinxx10", 2.56e-13),
    ] {
        let p = decompose(&load(name), Depth(0));
        let total = analyze_roundoff(&p, FloatFormat::Binary64, &FnErrorModel::libm())
            .map_err(|e| e.to_string())?
            .total;
        let ratio = total / published;
        ensure((0.1..=10.0).contains(&ratio), || {
            format!("{name}: {total:e} vs {published:e}")
        })?;
        parts.push(format!("{name} x{ratio:.2}"));
    }
    Ok(parts.join(", "))
}

fn walkthrough() -> Check {
    let text = std::fs::read_to_string(corpus_dir().join("forwardk2jY.real")).unwrap();
    let mut parts = vec![];
    for distribution in [Distribution::Equal, Distribution::Derivative] {
        let cfg = ToolConfig {
            target_error: Some(1e-13),
            distribution,
            accuracy_samples: 10_000,
            ..Default::default()
        };
        let r = run_source("forwardk2jY", "forwardk2jY.real", &text, &cfg).report;
        ensure(r.ok, || {
            format!("{distribution:?}: {:?} {:?}", r.reason, r.message)
        })?;
        let bound = r.final_bound.unwrap();
        ensure(bound <= 1e-13, || {
            format!("{distribution:?}: bound {bound:e}")
        })?;
        ensure(r.targets.len() == 2, || {
            format!("{} targets", r.targets.len())
        })?;
        let mut degrees = vec![];
        for t in &r.targets {
            let d = t
                .degree
                .ok_or_else(|| format!("{} kept libm: {:?}", t.name, t.message))?;
            ensure([12, 16, 20, 24].contains(&d), || {
                format!("{}: degree {d}", t.name)
            })?;
            let cert = t.certified_error.unwrap();
            ensure(cert <= t.epsilon, || {
                format!("{}: certificate {cert:e} > {:e}", t.name, t.epsilon)
            })?;
            degrees.push(d);
        }
        parts.push(format!(
            "{distribution:?}: degrees {degrees:?}, bound {bound:.2e}"
        ));
    }
    Ok(parts.join("; "))
}

fn random_domain(op: UnaryOp, rng: &mut ChaCha8Rng) -> Interval {
    let pow = |rng: &mut ChaCha8Rng, a: f64, b: f64| 10f64.powf(rng.gen_range(a..b));
    match op {
        UnaryOp::Exp => {
            let lo = rng.gen_range(-10.0..5.0);
            Interval::new(lo, lo + pow(rng, -2.0, 1.0))
        }
        UnaryOp::Log => {
            let lo = pow(rng, -3.0, 2.0);
            Interval::new(lo, lo * (1.0 + pow(rng, -2.0, 1.5)))
        }
        UnaryOp::Sin | UnaryOp::Cos => {
            let lo = rng.gen_range(-10.0..10.0);
            Interval::new(lo, lo + pow(rng, -2.0, 1.3))
        }
        UnaryOp::Tan => {
            let lo = rng.gen_range(-1.45..1.3);
            Interval::new(lo, (lo + pow(rng, -2.0, 0.5)).min(1.45))
        }
        UnaryOp::Sqrt => {
            let lo = pow(rng, -2.0, 2.0);
            Interval::new(lo, lo * (1.0 + pow(rng, -2.0, 1.0)))
        }
        UnaryOp::Neg => unreachable!(),
    }
}

/// Largest error over an even grid plus the piece boundaries and their
/// neighbours.
fn grid_error(f: &RealExpr, imp: &approxcc::approxgen::ApproxImpl, dom: Interval) -> f64 {
    let n = 4096;
    let mut xs: Vec<f64> = (0..=n)
        .map(|i| dom.lo + (dom.hi - dom.lo) * (i as f64 / n as f64))
        .collect();
    for p in &imp.pieces {
        for v in [p.domain.lo, p.domain.hi] {
            xs.extend([v, v.next_up(), v.next_down()]);
        }
    }
    let mut env = Env::new();
    xs.into_iter()
        .filter(|x| dom.contains(*x))
        .map(|x| {
            env.insert(PLACEHOLDER.into(), x);
            abs_diff_up(&reference_eval_f64(f, &env).unwrap(), imp.eval(x))
        })
        .fold(0.0, f64::max)
}

fn engine_certificates() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut certified, mut declined, mut pieces) = (0, 0, 0);
    let mut tightest: f64 = 0.0;
    for op in [
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Sqrt,
    ] {
        for _ in 0..20 {
            let f = RealExpr::unary(op, RealExpr::var(PLACEHOLDER));
            let dom = random_domain(op, &mut rng);
            let mut env = Env::new();
            env.insert(PLACEHOLDER.into(), dom);
            let mag = interval_eval(&f, &env).unwrap().mag().max(1e-300);
            let target = mag * 10f64.powf(-rng.gen_range(6.0..12.0));
            match search_degree(&ApproxSpec::new(f.clone(), dom, target)) {
                Ok(imp) => {
                    let sampled = grid_error(&f, &imp, dom);
                    ensure(imp.certified_error <= target, || {
                        format!(
                            "{} on {dom}: certificate {:e} > target {target:e}",
                            op.name(),
                            imp.certified_error
                        )
                    })?;
                    ensure(sampled <= imp.certified_error, || {
                        format!(
                            "{} on {dom}: sampled {sampled:e} > certificate {:e}",
                            op.name(),
                            imp.certified_error
                        )
                    })?;
                    tightest = tightest.max(sampled / imp.certified_error);
                    pieces += imp.pieces.len();
                    certified += 1;
                }
                Err(ApproxError::NoFeasibleApprox { .. } | ApproxError::SplitLimitExceeded(_)) => {
                    declined += 1
                }
                Err(e) => return Err(format!("{} on {dom} to {target:e}: {e}", op.name())),
            }
        }
    }
    ensure(certified > 0, || "nothing certified".into())?;
    Ok(format!(
        "{certified} certified ({pieces} pieces), {declined} declined, 0 violations, max sampled/certified {tightest:.3}"
    ))
}

fn subterms(e: &RealExpr, out: &mut HashSet<RealExpr>) {
    if !out.insert(e.clone()) {
        return;
    }
    match e {
        RealExpr::Unary(_, a) => subterms(a, out),
        RealExpr::Binary(_, a, b) => {
            subterms(a, out);
            subterms(b, out);
        }
        _ => {}
    }
}

fn analysis_invariants() -> Check {
    let (mut cancellations, mut containments, mut derivatives, mut skipped) =
        (0usize, 0usize, 0usize, 0usize);
    let mut worst_rel: f64 = 0.0;
    for p in corpus() {
        let e = p.inlined();
        let boxed = p.input_box(FloatFormat::Binary64);
        let mut subs = HashSet::new();
        subterms(&e, &mut subs);
        let subs: Vec<RealExpr> = subs.into_iter().collect();

        let mut gen = NoiseGen::new();
        let forms: Env<AffineForm> = boxed
            .iter()
            .map(|(k, v)| (k.clone(), AffineForm::from_interval(v, &mut gen)))
            .collect();
        for s in &subs {
            let zero = RealExpr::binary(BinaryOp::Sub, s.clone(), s.clone());
            let f =
                affine_eval(&zero, &forms, &mut gen).map_err(|err| format!("{}: {err}", p.name))?;
            let w = f.to_interval().width();
            ensure(w <= 2.0 * f.rounding_slack, || {
                format!("{}: width {w:e} for {s} - {s}", p.name)
            })?;
            cancellations += 1;
        }

        let ranges: Vec<Interval> = subs
            .iter()
            .map(|s| interval_eval(s, &boxed).unwrap())
            .collect();
        let domains: Vec<Interval> = p
            .params
            .iter()
            .map(|q| q.domain(FloatFormat::Binary64))
            .collect();
        for x in sample_inputs(&domains, 10_000, 3) {
            let env: Env<Float> = p
                .params
                .iter()
                .zip(&x)
                .map(|(q, v)| (q.name.clone(), Float::with_val(REF_PREC, *v)))
                .collect();
            for (s, r) in subs.iter().zip(&ranges) {
                let v = reference_eval(s, &env).unwrap();
                ensure(r.contains_float(&v), || {
                    format!("{}: {s} = {v} outside {r} at {x:?}", p.name)
                })?;
                containments += 1;
            }
        }

        let h = Float::with_val(REF_PREC, Float::i_exp(1, -80));
        let interior: Vec<Interval> = domains
            .iter()
            .map(|d| d.inflate(-0.01 * d.width()))
            .collect();
        for (i, q) in p.params.iter().enumerate() {
            let d = differentiate(&e, &q.name);
            for x in sample_inputs(&interior, 300, 4 + i as u64) {
                let mut env: Env<Float> = p
                    .params
                    .iter()
                    .zip(&x)
                    .map(|(q, v)| (q.name.clone(), Float::with_val(REF_PREC, *v)))
                    .collect();
                let Ok(exact) = reference_eval(&d, &env) else {
                    skipped += 1;
                    continue;
                };
                env.insert(q.name.clone(), Float::with_val(REF_PREC, x[i] + h.clone()));
                let up = reference_eval(&e, &env);
                env.insert(q.name.clone(), Float::with_val(REF_PREC, x[i] - h.clone()));
                let down = reference_eval(&e, &env);
                let (Ok(up), Ok(down)) = (up, down) else {
                    skipped += 1;
                    continue;
                };
                let fd =
                    Float::with_val(REF_PREC, up - down) / Float::with_val(REF_PREC, &h * 2u32);
                if exact.clone().abs() < 1e-40 {
                    skipped += 1;
                    continue;
                }
                let rel = (Float::with_val(REF_PREC, &fd - &exact) / &exact)
                    .abs()
                    .to_f64();
                ensure(rel < 1e-6, || {
                    format!(
                        "{}: d/d{} relative deviation {rel:e} at {x:?}",
                        p.name, q.name
                    )
                })?;
                worst_rel = worst_rel.max(rel);
                derivatives += 1;
            }
        }
    }
    Ok(format!(
        "{cancellations} cancellations, {containments} containments, {derivatives} derivatives \
         (max rel {worst_rel:.1e}, {skipped} skipped), 0 violations"
    ))
}

fn bench_protocol() -> Check {
    ensure(DEFAULT_SAMPLES == 100_000 && DEFAULT_RUNS == 5, || {
        "protocol constants".into()
    })?;
    for n in [0, 1, 9, 10, 11, 99_999, 100_000, 123_457] {
        ensure(kept_count(n) == n * 9 / 10, || format!("kept_count({n})"))?;
    }
    let runs: Vec<Vec<u64>> = (0..5)
        .map(|r| {
            (0..100u64)
                .map(|i| if i >= 90 { 1_000_000 } else { i + r })
                .collect()
        })
        .collect();
    let s = summarize(&runs, 0, Timer::Rdtsc);
    ensure(s.kept == 90 && s.max < 100.0, || {
        format!("outliers survive trimming: {s:?}")
    })?;

    let piece = |lo: f64, hi: f64, center: f64, degree: usize| Piece {
        domain: Interval::new(lo, hi),
        center,
        coeffs: vec![1.0; degree + 1],
        certified_error: 0.0,
    };
    for degree in 1..=24 {
        for center in [0.0, 0.5] {
            let single = cost_estimate(&Reduction::None, &[piece(0.0, 1.0, center, degree)]);
            for k in 2..=64usize {
                let split: Vec<Piece> = (0..k)
                    .map(|i| {
                        piece(
                            i as f64 / k as f64,
                            (i + 1) as f64 / k as f64,
                            center,
                            degree,
                        )
                    })
                    .collect();
                let c = cost_estimate(&Reduction::None, &split);
                ensure(single < c, || {
                    format!("degree {degree}: 1 piece costs {single}, {k} pieces {c}")
                })?;
            }
        }
    }

    let text = std::fs::read_to_string(corpus_dir().join("forwardk2jY.real")).unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ToolConfig {
        mode: Mode::Bench,
        out_dir: Some(dir.path().to_path_buf()),
        accuracy_samples: 0,
        ..Default::default()
    };
    let r = run_source("forwardk2jY", "forwardk2jY.real", &text, &cfg).report;
    let t = r
        .wall_clock
        .timing
        .ok_or_else(|| format!("no timing: {:?}", r.message))?;
    for s in [&t.approx, &t.libm] {
        ensure(
            s.samples == 100_000 && s.kept == 90_000 && s.runs == 5,
            || format!("{s:?}"),
        )?;
    }
    Ok(format!(
        "100000 inputs, 90000 kept, 5 runs; forwardk2jY {} backend ({:?}): {:.1} vs libm {:.1}, speedup {:+.1}%",
        t.backend, t.approx.timer, t.approx.mean, t.libm.mean, t.speedup_percent
    ))
}

fn determinism(first: &Report) -> Check {
    let files = collect_inputs(&[corpus_dir()]).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .map_err(|e| e.to_string())?;
    let second = pool.install(|| run_batch(&files, &sweep_config(ErrorScale::Small)));
    let a = first.without_wall_clock().to_json();
    let b = second.without_wall_clock().to_json();
    ensure(a == b, || {
        let line = a
            .lines()
            .zip(b.lines())
            .position(|(x, y)| x != y)
            .unwrap_or(0);
        format!("reports differ at line {}", line + 1)
    })?;
    Ok(format!(
        "{} bytes identical across a serial and a 4-thread run",
        a.len()
    ))
}

fn run(n: usize, title: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS  {n}. {title}: {detail} [{secs:.0}s]"),
        Err(why) => println!("FAIL  {n}. {title}: {why} [{secs:.0}s]"),
    }
    result.is_ok()
}

fn main() -> ExitCode {
    let files = collect_inputs(&[corpus_dir()]).unwrap();
    let mut sweeps = vec![];
    let mut results = vec![];
    results.push(run(1, "soundness sweep", || {
        for scale in ErrorScale::ALL {
            sweeps.push((scale, run_batch(&files, &sweep_config(scale))));
        }
        soundness(&sweeps)
    }));
    results.push(run(2, "libm analysis fidelity", libm_fidelity));
    results.push(run(3, "forwardk2jY walkthrough", walkthrough));
    results.push(run(4, "approximation certificates", engine_certificates));
    results.push(run(5, "analysis invariants", analysis_invariants));
    results.push(run(
        6,
        "benchmark protocol and cost ranking",
        bench_protocol,
    ));
    results.push(run(7, "determinism", || match sweeps.first() {
        Some((_, first)) => determinism(first),
        None => Err("no sweep report to compare".into()),
    }));
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
