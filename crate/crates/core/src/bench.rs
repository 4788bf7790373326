//! Measurement protocol: seeded inputs, per-call cycle counts with the top
//! 10% trimmed per run, averaged over several runs, plus empirical accuracy
//! against the multiprecision reference.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codegen::CompiledProgram;
use crate::expr::RealExpr;
use crate::numerics::bigreal::{abs_diff_up, reference_eval_f64};
use crate::numerics::feval::EvalError;
use crate::numerics::{Env, Interval};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Timer {
    Rdtsc,
    MonotonicNs,
}

impl Timer {
    pub fn native() -> Timer {
        if cfg!(target_arch = "x86_64") {
            Timer::Rdtsc
        } else {
            Timer::MonotonicNs
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
    pub samples: usize,
    /// Samples kept per run after trimming.
    pub kept: usize,
    pub seed: u64,
    pub timer: Timer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub sampled_max: f64,
    pub samples: usize,
    pub certified: f64,
    pub margin: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("build failed: {0}")]
    Build(String),
    #[error("execution failed: {0}")]
    ExecutionFailure(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `n` points drawn uniformly from the box, deterministic in `seed`.
pub fn sample_inputs(domains: &[Interval], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            domains
                .iter()
                .map(|d| {
                    if d.lo == d.hi {
                        d.lo
                    } else {
                        (d.lo + (d.hi - d.lo) * rng.gen::<f64>()).clamp(d.lo, d.hi)
                    }
                })
                .collect()
        })
        .collect()
}

/// Number of samples kept out of `n`.
pub fn kept_count(n: usize) -> usize {
    n * 9 / 10
}

/// Per-run trimming of the highest 10%, then run-wise mean, min and max
/// averaged over runs.
pub fn summarize(runs: &[Vec<u64>], seed: u64, timer: Timer) -> TimingStats {
    let samples = runs.first().map_or(0, Vec::len);
    let keep = kept_count(samples);
    let (mut mean, mut min, mut max) = (0.0, 0.0, 0.0);
    for r in runs {
        let mut v = r.clone();
        v.sort_unstable();
        v.truncate(keep);
        if v.is_empty() {
            continue;
        }
        mean += v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
        min += v[0] as f64;
        max += v[v.len() - 1] as f64;
    }
    let k = runs.len().max(1) as f64;
    TimingStats {
        mean: mean / k,
        min: min / k,
        max: max / k,
        runs: runs.len(),
        samples,
        kept: keep,
        seed,
        timer,
    }
}

#[inline(always)]
fn counter() -> u64 {
    #[cfg(target_arch = "x86_64")]
    unsafe {
        // Serialize so the read is not reordered around the measured call.
        std::arch::x86_64::_mm_lfence();
        let t = std::arch::x86_64::_rdtsc();
        std::arch::x86_64::_mm_lfence();
        t
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        use std::sync::OnceLock;
        use std::time::Instant;
        static START: OnceLock<Instant> = OnceLock::new();
        START.get_or_init(Instant::now).elapsed().as_nanos() as u64
    }
}

/// Times `f` on every input: one warm-up pass, then `runs` timed passes.
pub fn measure<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    inputs: &[Vec<f64>],
    runs: usize,
    seed: u64,
) -> TimingStats {
    let mut sink = 0.0;
    for x in inputs {
        sink += f(x);
    }
    let mut all = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut ticks = Vec::with_capacity(inputs.len());
        for x in inputs {
            let t0 = counter();
            let v = f(x);
            let t1 = counter();
            sink += v;
            ticks.push(t1.saturating_sub(t0));
        }
        all.push(ticks);
    }
    std::hint::black_box(sink);
    summarize(&all, seed, Timer::native())
}

/// Largest |reference - implementation| over `inputs`, where the reference
/// evaluates `exact` on the inputs as rounded to the program format.
pub fn measure_accuracy(
    compiled: &CompiledProgram,
    exact: &RealExpr,
    inputs: &[Vec<f64>],
    certified: f64,
) -> Result<AccuracyReport, EvalError> {
    let errors: Vec<f64> = inputs
        .par_iter()
        .map(|x| {
            let got = compiled.eval(x)?;
            let env: Env<f64> = compiled
                .params
                .iter()
                .cloned()
                .zip(x.iter().map(|&v| {
                    if compiled.fmt.is_single() {
                        v as f32 as f64
                    } else {
                        v
                    }
                }))
                .collect();
            let want = reference_eval_f64(exact, &env)?;
            Ok(abs_diff_up(&want, got))
        })
        .collect::<Result<_, EvalError>>()?;
    let sampled_max = errors.into_iter().fold(0.0, f64::max);
    Ok(AccuracyReport {
        sampled_max,
        samples: inputs.len(),
        certified,
        margin: certified - sampled_max,
    })
}

/// A built benchmark driver.
#[derive(Debug, Clone)]
pub struct Executable {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Approx,
    Libm,
}

/// Runs `build.sh` in `dir` and returns the driver it produced.
pub fn build(dir: &Path, entry: &str) -> Result<Executable, BenchError> {
    let out = Command::new("sh").arg(dir.join("build.sh")).output()?;
    if !out.status.success() {
        return Err(BenchError::Build(
            String::from_utf8_lossy(&out.stderr).into_owned(),
        ));
    }
    Ok(Executable {
        path: dir.join(format!("{entry}_driver")),
    })
}

impl Executable {
    /// Results and per-run timings of the compiled program on `inputs`.
    pub fn run(
        &self,
        variant: Variant,
        inputs: &[Vec<f64>],
        runs: usize,
    ) -> Result<(Vec<f64>, Vec<Vec<u64>>, Timer), BenchError> {
        let arity = inputs.first().map_or(0, Vec::len);
        let mut bytes = Vec::with_capacity(16 + 8 * arity * inputs.len());
        bytes.extend((inputs.len() as u64).to_le_bytes());
        bytes.extend((arity as u64).to_le_bytes());
        for x in inputs {
            for v in x {
                bytes.extend(v.to_le_bytes());
            }
        }
        let dir = self.path.parent().unwrap_or(Path::new("."));
        let input = dir.join("bench_input.bin");
        let output = dir.join("bench_output.bin");
        fs::write(&input, bytes)?;
        let which = if variant == Variant::Libm {
            "libm"
        } else {
            "approx"
        };
        let out = Command::new(&self.path)
            .arg(which)
            .arg(runs.to_string())
            .arg(&input)
            .arg(&output)
            .output()?;
        if !out.status.success() {
            return Err(BenchError::ExecutionFailure(
                String::from_utf8_lossy(&out.stderr).into_owned(),
            ));
        }
        let timer = match String::from_utf8_lossy(&out.stdout).trim() {
            "rdtsc" => Timer::Rdtsc,
            _ => Timer::MonotonicNs,
        };
        let data = fs::read(&output)?;
        let n = inputs.len();
        if data.len() != 8 * n * (1 + runs) {
            return Err(BenchError::ExecutionFailure(format!(
                "unexpected output size {}",
                data.len()
            )));
        }
        let word = |i: usize| <[u8; 8]>::try_from(&data[8 * i..8 * i + 8]).unwrap();
        let results = (0..n).map(|i| f64::from_le_bytes(word(i))).collect();
        let ticks = (0..runs)
            .map(|r| {
                (0..n)
                    .map(|i| u64::from_le_bytes(word(n + r * n + i)))
                    .collect()
            })
            .collect();
        let _ = fs::remove_file(&input);
        let _ = fs::remove_file(&output);
        Ok((results, ticks, timer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_seeded_and_respects_domains() {
        let doms = [Interval::new(-1.0, 2.0), Interval::point(0.25)];
        let a = sample_inputs(&doms, 1000, 7);
        assert_eq!(a, sample_inputs(&doms, 1000, 7));
        assert_ne!(a, sample_inputs(&doms, 1000, 8));
        assert!(a.iter().all(|x| doms[0].contains(x[0]) && x[1] == 0.25));
        assert_eq!(sample_inputs(&doms, DEFAULT_SAMPLES, 1).len(), 100_000);
    }

    #[test]
    fn trimming_keeps_ninety_percent() {
        assert_eq!(kept_count(100_000), 90_000);
        assert_eq!(kept_count(7), 6);
        let run: Vec<u64> = (1..=10).rev().collect();
        let s = summarize(&[run.clone(), run], 0, Timer::Rdtsc);
        assert_eq!((s.kept, s.min, s.max, s.mean), (9, 1.0, 9.0, 5.0));
    }

    #[test]
    fn constant_stub_is_flat() {
        let inputs = sample_inputs(&[Interval::new(0.0, 1.0)], 20_000, 3);
        let s = measure(|x| x[0], &inputs, DEFAULT_RUNS, 3);
        assert_eq!(s.runs, 5);
        assert!(s.min <= s.mean && s.mean <= s.max);
        // Trimmed maximum stays within a small multiple of the minimum.
        assert!(s.max <= 20.0 * s.min.max(1.0), "{s:?}");
    }
}
