//! The end-to-end tool: parse, decompose, analyze with libm, distribute the
//! budget, approximate each target in program order, re-analyze, emit code
//! and optionally benchmark. Every benchmark yields a report entry, failed
//! or not.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    analyze_roundoff, propagation_factor, FnErrorModel, KernelModel, DEFAULT_BOX_BUDGET,
};
use crate::approxgen::{
    search_degree, ApproxError, ApproxImpl, ApproxSpec, DEFAULT_MAX_PIECES, DEFAULT_TIMEOUT,
};
use crate::bench::{self, AccuracyReport, TimingStats, Variant};
use crate::budget::{BudgetAllocation, BudgetError, Distribution};
use crate::codegen::{self, CompiledProgram, Implementation};
use crate::expr::RealExpr;
use crate::format::FloatFormat;
use crate::frontend::{decompose, parse_program, Depth, Program, PLACEHOLDER};
use crate::numerics::{interval_eval, Env, Interval};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analyze,
    Approx,
    Bench,
}

/// Multiplier applied to each benchmark's own error target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorScale {
    #[default]
    Small,
    Middle,
    Large,
}

impl ErrorScale {
    pub const ALL: [ErrorScale; 3] = [ErrorScale::Small, ErrorScale::Middle, ErrorScale::Large];

    pub fn factor(self) -> f64 {
        match self {
            ErrorScale::Small => 1.0,
            ErrorScale::Middle => 10.0,
            ErrorScale::Large => 100.0,
        }
    }

    pub fn parse(s: &str) -> Option<ErrorScale> {
        match s {
            "small" => Some(ErrorScale::Small),
            "middle" => Some(ErrorScale::Middle),
            "large" => Some(ErrorScale::Large),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolConfig {
    pub mode: Mode,
    /// Replaces each program's own target when set.
    pub target_error: Option<f64>,
    pub error_scale: ErrorScale,
    pub distribution: Distribution,
    pub depth: Depth,
    pub degrees: Option<Vec<usize>>,
    pub timeout_per_call: Duration,
    pub max_pieces: usize,
    pub format: FloatFormat,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// Random points for the accuracy check; 0 disables it.
    pub accuracy_samples: usize,
    pub bench_samples: usize,
    pub bench_runs: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            mode: Mode::Approx,
            target_error: None,
            error_scale: ErrorScale::Small,
            distribution: Distribution::Equal,
            depth: Depth(0),
            degrees: None,
            timeout_per_call: DEFAULT_TIMEOUT,
            max_pieces: DEFAULT_MAX_PIECES,
            format: FloatFormat::Binary64,
            out_dir: None,
            seed: 0,
            accuracy_samples: bench::DEFAULT_SAMPLES,
            bench_samples: bench::DEFAULT_SAMPLES,
            bench_runs: bench::DEFAULT_RUNS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reason {
    ParseError,
    DomainError,
    BudgetExhausted,
    NoFeasibleApprox,
    SplitLimitExceeded,
    FinalBoundExceeded,
    InternalError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetReport {
    pub name: String,
    pub function: String,
    pub argument: String,
    pub domain: Option<Interval>,
    /// Local absolute budget εᵢ.
    pub epsilon: f64,
    /// εᵢ relative to min |f| over the domain, when that is positive.
    pub relative_epsilon: Option<f64>,
    pub implementation: &'static str,
    pub reason: Option<Reason>,
    pub message: Option<String>,
    pub degree: Option<usize>,
    pub pieces: Option<usize>,
    pub reduction: Option<&'static str>,
    pub certified_error: Option<f64>,
    pub cost: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub backend: &'static str,
    pub approx: TimingStats,
    pub libm: TimingStats,
    /// Relative reduction of mean time against libm, in percent.
    pub speedup_percent: f64,
}

/// Fields that legitimately differ between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct WallClock {
    pub analysis_seconds: f64,
    pub total_seconds: f64,
    pub timing: Option<TimingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub name: String,
    pub source: String,
    pub ok: bool,
    pub reason: Option<Reason>,
    pub message: Option<String>,
    pub target: Option<f64>,
    pub libm_bound: Option<f64>,
    pub minimum_target: Option<f64>,
    pub final_bound: Option<f64>,
    pub retried: bool,
    pub budget: Option<BudgetAllocation>,
    pub targets: Vec<TargetReport>,
    pub cost: Option<u32>,
    pub accuracy: Option<AccuracyReport>,
    pub emitted: Option<String>,
    pub wall_clock: WallClock,
}

impl BenchmarkReport {
    fn new(name: &str, source: &str) -> BenchmarkReport {
        BenchmarkReport {
            name: name.to_string(),
            source: source.to_string(),
            ok: false,
            reason: None,
            message: None,
            target: None,
            libm_bound: None,
            minimum_target: None,
            final_bound: None,
            retried: false,
            budget: None,
            targets: vec![],
            cost: None,
            accuracy: None,
            emitted: None,
            wall_clock: WallClock::default(),
        }
    }

    fn fail(&mut self, reason: Reason, message: impl Into<String>) {
        self.ok = false;
        self.reason = Some(reason);
        self.message = Some(message.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub mode: Mode,
    pub target_error: Option<f64>,
    pub error_scale: ErrorScale,
    pub distribution: Distribution,
    pub depth: String,
    pub degrees: Option<Vec<usize>>,
    pub timeout_per_call: f64,
    pub max_pieces: usize,
    pub format: FloatFormat,
    pub seed: u64,
    pub accuracy_samples: usize,
    pub bench_samples: usize,
    pub bench_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: ConfigSummary,
    pub benchmarks: Vec<BenchmarkReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    /// The report with every wall-clock field cleared, for comparing runs.
    pub fn without_wall_clock(&self) -> Report {
        let mut r = self.clone();
        for b in &mut r.benchmarks {
            b.wall_clock = WallClock::default();
        }
        r
    }

    pub fn all_ok(&self) -> bool {
        self.benchmarks.iter().all(|b| b.ok)
    }

    /// One row per benchmark.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "name",
            "ok",
            "reason",
            "target",
            "libm_bound",
            "final_bound",
            "kernels",
            "cost",
            "sampled_max",
            "approx_mean",
            "libm_mean",
            "speedup_percent",
            "timer",
            "analysis_seconds",
        ]);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for b in &self.benchmarks {
            let t = b.wall_clock.timing.as_ref();
            let kernels = b
                .targets
                .iter()
                .filter(|t| t.implementation == "kernel")
                .count();
            let _ = w.write_record([
                b.name.clone(),
                b.ok.to_string(),
                b.reason.map(|r| format!("{r:?}")).unwrap_or_default(),
                opt(b.target),
                opt(b.libm_bound),
                opt(b.final_bound),
                kernels.to_string(),
                b.cost.map(|c| c.to_string()).unwrap_or_default(),
                opt(b.accuracy.as_ref().map(|a| a.sampled_max)),
                t.map(|t| format!("{:.2}", t.approx.mean))
                    .unwrap_or_default(),
                t.map(|t| format!("{:.2}", t.libm.mean)).unwrap_or_default(),
                t.map(|t| format!("{:.2}", t.speedup_percent))
                    .unwrap_or_default(),
                t.map(|t| format!("{:?}", t.approx.timer))
                    .unwrap_or_default(),
                format!("{:.3}", b.wall_clock.analysis_seconds),
            ]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

/// Everything produced for one benchmark.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: BenchmarkReport,
    /// The decomposed program.
    pub program: Option<Program>,
    /// The original program with every let inlined, for reference evaluation.
    pub exact: Option<RealExpr>,
    pub compiled: Option<CompiledProgram>,
}

fn reason_of(e: &ApproxError) -> Reason {
    match e {
        ApproxError::SplitLimitExceeded(_) => Reason::SplitLimitExceeded,
        ApproxError::Domain(_) => Reason::DomainError,
        _ => Reason::NoFeasibleApprox,
    }
}

struct Attempt {
    impls: BTreeMap<Arc<str>, Implementation>,
    targets: Vec<TargetReport>,
    final_bound: Result<f64, String>,
}

fn relative(f: &RealExpr, dom: Interval, eps: f64) -> Option<f64> {
    let mut env = Env::new();
    env.insert(PLACEHOLDER.into(), dom);
    let m = interval_eval(f, &env).ok()?.mig();
    (m > 0.0).then(|| eps / m)
}

/// Approximates every target in program order; each target's domain comes
/// from an analysis with the earlier kernels already in place.
fn attempt(p: &Program, alloc: &BudgetAllocation, cfg: &ToolConfig) -> Attempt {
    let mut fem = FnErrorModel::libm();
    let mut impls = BTreeMap::new();
    let mut targets = Vec::new();
    for ((_, l, t), budget) in p.targets().zip(&alloc.targets) {
        let mut rep = TargetReport {
            name: l.name.to_string(),
            function: t.function.to_string(),
            argument: t.argument.to_string(),
            domain: None,
            epsilon: budget.local,
            relative_epsilon: None,
            implementation: "libm",
            reason: None,
            message: None,
            degree: None,
            pieces: None,
            reduction: None,
            certified_error: None,
            cost: None,
        };
        let reach = analyze_roundoff(p, cfg.format, &fem)
            .map_err(|e| e.to_string())
            .and_then(|a| {
                a.let_bound(&l.name)
                    .and_then(|b| b.argument_reach())
                    .ok_or_else(|| "no argument".into())
            });
        let domain = match reach {
            Ok(d) => d,
            Err(e) => {
                rep.reason = Some(Reason::DomainError);
                rep.message = Some(e);
                impls.insert(l.name.clone(), Implementation::Libm);
                targets.push(rep);
                continue;
            }
        };
        rep.domain = Some(domain);
        rep.relative_epsilon = relative(&t.function, domain, budget.local);
        let mut spec = ApproxSpec::new(t.function.clone(), domain, budget.local);
        if let Some(d) = &cfg.degrees {
            spec.degrees = d.clone();
        }
        spec.timeout = cfg.timeout_per_call;
        spec.max_pieces = cfg.max_pieces;
        match search_degree(&spec) {
            Ok(imp) => {
                fem = fem.with_kernel(
                    &l.name,
                    KernelModel {
                        certified_error: imp.certified_error,
                        domain: imp.domain,
                    },
                );
                describe(&mut rep, &imp);
                impls.insert(l.name.clone(), Implementation::Kernel(imp));
            }
            Err(e) => {
                rep.reason = Some(reason_of(&e));
                rep.message = Some(e.to_string());
                impls.insert(l.name.clone(), Implementation::Libm);
            }
        }
        targets.push(rep);
    }
    let final_bound = analyze_roundoff(p, cfg.format, &fem)
        .map(|a| a.total)
        .map_err(|e| e.to_string());
    Attempt {
        impls,
        targets,
        final_bound,
    }
}

fn describe(rep: &mut TargetReport, imp: &ApproxImpl) {
    rep.implementation = "kernel";
    rep.degree = Some(imp.degree);
    rep.pieces = Some(imp.pieces.len());
    rep.reduction = Some(imp.reduction.name());
    rep.certified_error = Some(imp.certified_error);
    rep.cost = Some(imp.cost);
}

/// Range width of the target's function over its argument reach: any
/// approximation within that error is acceptable for a dead call.
fn dead_call_cap(t: &crate::frontend::Target, reach: Option<Interval>) -> f64 {
    reach
        .and_then(|r| {
            let mut env = Env::new();
            env.insert(PLACEHOLDER.into(), r);
            interval_eval(&t.function, &env).ok()
        })
        .map(|r| r.width().max(f64::MIN_POSITIVE))
        .unwrap_or(f64::MIN_POSITIVE)
}

/// Runs the pipeline on one program's source text.
pub fn run_source(name: &str, source: &str, text: &str, cfg: &ToolConfig) -> Outcome {
    let start = Instant::now();
    let mut report = BenchmarkReport::new(name, source);
    let mut out = Outcome {
        report: report.clone(),
        program: None,
        exact: None,
        compiled: None,
    };
    let parsed = match parse_program(text) {
        Ok(p) => p,
        Err(e) => {
            report.fail(Reason::ParseError, e.to_string());
            out.report = report;
            return out;
        }
    };
    report.name = parsed.name.clone();
    out.exact = Some(parsed.inlined());
    let p = decompose(&parsed, cfg.depth);
    out.program = Some(p.clone());
    let finish = |mut report: BenchmarkReport, mut out: Outcome| {
        report.wall_clock.total_seconds = start.elapsed().as_secs_f64();
        if report.wall_clock.analysis_seconds == 0.0 {
            report.wall_clock.analysis_seconds = report.wall_clock.total_seconds;
        }
        out.report = report;
        out
    };

    let libm = match analyze_roundoff(&p, cfg.format, &FnErrorModel::libm()) {
        Ok(a) => a,
        Err(e) => {
            report.fail(Reason::DomainError, e.to_string());
            return finish(report, out);
        }
    };
    report.libm_bound = Some(libm.total);
    if cfg.mode == Mode::Analyze {
        report.ok = true;
        return finish(report, out);
    }
    let Some(base) = cfg.target_error.or(p.target_error) else {
        report.fail(Reason::ParseError, "no error target given");
        return finish(report, out);
    };
    let tau = base * cfg.error_scale.factor();
    report.target = Some(tau);

    let mut calls = Vec::new();
    for (i, l, t) in p.targets() {
        let m = match propagation_factor(&p, i, &libm, cfg.format, DEFAULT_BOX_BUDGET) {
            Ok(m) => m,
            Err(e) => {
                report.fail(Reason::DomainError, e.to_string());
                return finish(report, out);
            }
        };
        let reach = libm.let_bound(&l.name).and_then(|b| b.argument_reach());
        calls.push((l.name.to_string(), m, dead_call_cap(t, reach)));
    }
    let alloc = match BudgetAllocation::new(tau, libm.total, cfg.distribution, &calls) {
        Ok(a) => a,
        Err(BudgetError::BudgetExhausted { minimum, .. }) => {
            report.minimum_target = Some(minimum);
            report.fail(
                Reason::BudgetExhausted,
                format!("target {tau:e} does not exceed the roundoff floor {minimum:e}"),
            );
            return finish(report, out);
        }
    };

    let mut result = attempt(&p, &alloc, cfg);
    let mut used = alloc.clone();
    if !matches!(result.final_bound, Ok(b) if b <= tau) && !calls.is_empty() {
        report.retried = true;
        used = alloc.halved();
        result = attempt(&p, &used, cfg);
    }
    report.budget = Some(used);
    report.targets = result.targets;
    let bound = match result.final_bound {
        Ok(b) => b,
        Err(e) => {
            report.fail(Reason::DomainError, e);
            return finish(report, out);
        }
    };
    report.final_bound = Some(bound);
    if bound > tau {
        // Fail closed: nothing is emitted.
        let code = report
            .targets
            .iter()
            .find_map(|t| t.reason.filter(|r| *r == Reason::SplitLimitExceeded))
            .unwrap_or(Reason::FinalBoundExceeded);
        report.fail(
            code,
            format!("final bound {bound:e} exceeds target {tau:e}"),
        );
        return finish(report, out);
    }
    let compiled = match codegen::emit_internal(&p, &result.impls, cfg.format) {
        Ok(c) => c,
        Err(e) => {
            report.fail(Reason::InternalError, e.to_string());
            return finish(report, out);
        }
    };
    report.cost = Some(compiled.kernels.iter().map(|k| k.imp.cost).sum());
    report.ok = true;
    report.wall_clock.analysis_seconds = start.elapsed().as_secs_f64();

    let mut emitted_dir = None;
    if let Some(dir) = &cfg.out_dir {
        let dir = dir.join(codegen::c_identifier(&p.name));
        let bundle = codegen::emit(&p, &result.impls, cfg.format).expect("already compiled once");
        match bundle.write_to(&dir) {
            Ok(()) => {
                report.emitted = Some(dir.display().to_string());
                emitted_dir = Some(dir);
            }
            Err(e) => report.fail(
                Reason::InternalError,
                format!("cannot write {}: {e}", dir.display()),
            ),
        }
    }

    let domains: Vec<Interval> = p.params.iter().map(|q| q.domain(cfg.format)).collect();
    if cfg.accuracy_samples > 0 {
        let inputs = bench::sample_inputs(&domains, cfg.accuracy_samples, cfg.seed);
        match bench::measure_accuracy(&compiled, out.exact.as_ref().unwrap(), &inputs, bound) {
            Ok(a) => report.accuracy = Some(a),
            Err(e) => report.fail(Reason::DomainError, format!("accuracy check: {e}")),
        }
    }
    if cfg.mode == Mode::Bench {
        let inputs = bench::sample_inputs(&domains, cfg.bench_samples, cfg.seed);
        report.wall_clock.timing = timing(&compiled, emitted_dir.as_deref(), &inputs, cfg);
    }
    out.compiled = Some(compiled);
    finish(report, out)
}

fn timing(
    c: &CompiledProgram,
    dir: Option<&Path>,
    inputs: &[Vec<f64>],
    cfg: &ToolConfig,
) -> Option<TimingReport> {
    let speedup = |a: &TimingStats, l: &TimingStats| 100.0 * (l.mean - a.mean) / l.mean;
    if let Some(dir) = dir {
        let native = bench::build(dir, &codegen::c_identifier(&c.name)).and_then(|exe| {
            let (_, ta, timer) = exe.run(Variant::Approx, inputs, cfg.bench_runs)?;
            let (_, tl, _) = exe.run(Variant::Libm, inputs, cfg.bench_runs)?;
            Ok((
                bench::summarize(&ta, cfg.seed, timer),
                bench::summarize(&tl, cfg.seed, timer),
            ))
        });
        if let Ok((approx, libm)) = native {
            let s = speedup(&approx, &libm);
            return Some(TimingReport {
                backend: "c",
                approx,
                libm,
                speedup_percent: s,
            });
        }
    }
    let approx = bench::measure(
        |x| c.eval(x).unwrap_or(0.0),
        inputs,
        cfg.bench_runs,
        cfg.seed,
    );
    let libm = bench::measure(
        |x| c.eval_libm(x).unwrap_or(0.0),
        inputs,
        cfg.bench_runs,
        cfg.seed,
    );
    let s = speedup(&approx, &libm);
    Some(TimingReport {
        backend: "internal",
        approx,
        libm,
        speedup_percent: s,
    })
}

/// Runs one file, turning any panic into a failed entry.
pub fn run_file(path: &Path, cfg: &ToolConfig) -> Outcome {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let source = path.display().to_string();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let mut report = BenchmarkReport::new(&name, &source);
            report.fail(Reason::ParseError, format!("cannot read: {e}"));
            return Outcome {
                report,
                program: None,
                exact: None,
                compiled: None,
            };
        }
    };
    match catch_unwind(AssertUnwindSafe(|| run_source(&name, &source, &text, cfg))) {
        Ok(o) => o,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            let mut report = BenchmarkReport::new(&name, &source);
            report.fail(Reason::InternalError, msg);
            Outcome {
                report,
                program: None,
                exact: None,
                compiled: None,
            }
        }
    }
}

/// Expands directories to their `.real` files, sorted.
pub fn collect_inputs(paths: &[PathBuf]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "real"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Runs every file in parallel; entries keep the input order. Benchmarks
/// are timed sequentially afterwards so measurements do not interfere.
pub fn run_batch(paths: &[PathBuf], cfg: &ToolConfig) -> Report {
    let quiet = ToolConfig {
        mode: if cfg.mode == Mode::Bench {
            Mode::Approx
        } else {
            cfg.mode
        },
        ..cfg.clone()
    };
    let mut reports: Vec<BenchmarkReport> = paths
        .par_iter()
        .map(|p| run_file(p, &quiet).report)
        .collect();
    if cfg.mode == Mode::Bench {
        for (r, p) in reports.iter_mut().zip(paths) {
            if r.ok {
                *r = run_file(p, cfg).report;
            }
        }
    }
    Report {
        schema_version: SCHEMA_VERSION,
        config: summary(cfg),
        benchmarks: reports,
    }
}

pub fn summary(cfg: &ToolConfig) -> ConfigSummary {
    ConfigSummary {
        mode: cfg.mode,
        target_error: cfg.target_error,
        error_scale: cfg.error_scale,
        distribution: cfg.distribution,
        depth: cfg.depth.to_string(),
        degrees: cfg.degrees.clone(),
        timeout_per_call: cfg.timeout_per_call.as_secs_f64(),
        max_pieces: cfg.max_pieces,
        format: cfg.format,
        seed: cfg.seed,
        accuracy_samples: cfg.accuracy_samples,
        bench_samples: cfg.bench_samples,
        bench_runs: cfg.bench_runs,
    }
}
