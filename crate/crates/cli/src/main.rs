use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use approxcc::budget::Distribution;
use approxcc::format::FloatFormat;
use approxcc::frontend::Depth;
use approxcc::pipeline::{collect_inputs, run_batch, ErrorScale, Mode, ToolConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Roundoff analysis with libm only.
    Analyze,
    /// Approximate, verify and emit C.
    Approx,
    /// Approximate, then time against libm.
    Bench,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    F64,
    F32,
}

/// Replaces elementary function calls in Real programs by verified
/// polynomial kernels within a whole-program error bound.
#[derive(Debug, Parser)]
#[command(name = "approxcc", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Program files or directories of `.real` files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Absolute error target, overriding each program's own.
    #[arg(long)]
    target_error: Option<f64>,
    /// Scales each program's target by 1, 10 or 100.
    #[arg(long, default_value = "small", value_parser = parse_scale)]
    error_scale: ErrorScale,
    #[arg(long, default_value = "equal", value_parser = parse_distribution)]
    distribution: Distribution,
    /// Expression height grouped into one approximation, or `inf`.
    #[arg(long, default_value = "0", value_parser = parse_depth)]
    depth: Depth,
    /// Candidate degrees, e.g. `4,8,12`.
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<usize>>,
    /// Seconds allowed per degree attempt.
    #[arg(long, default_value_t = 180.0)]
    timeout_per_call: f64,
    #[arg(long, default_value_t = approxcc::approxgen::DEFAULT_MAX_PIECES)]
    max_splits: usize,
    /// Table-driven reductions are not supported; must be 0.
    #[arg(long, default_value_t = 0)]
    table_bits: u32,
    #[arg(long, value_enum, default_value = "f64")]
    format: Format,
    /// Directory for generated sources.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here (printed to stdout otherwise).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write per-benchmark rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Random points for the accuracy check (0 disables it).
    #[arg(long, default_value_t = approxcc::bench::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = approxcc::bench::DEFAULT_RUNS)]
    runs: usize,
}

fn parse_scale(s: &str) -> Result<ErrorScale, String> {
    ErrorScale::parse(s).ok_or_else(|| format!("expected small, middle or large, got `{s}`"))
}

fn parse_distribution(s: &str) -> Result<Distribution, String> {
    s.parse()
}

fn parse_depth(s: &str) -> Result<Depth, String> {
    Depth::parse(s).ok_or_else(|| format!("expected a number or `inf`, got `{s}`"))
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.table_bits != 0 {
        eprintln!("approxcc: table-driven methods are not supported (--table-bits must be 0)");
        return ExitCode::from(2);
    }
    if !(args.timeout_per_call > 0.0) {
        eprintln!("approxcc: --timeout-per-call must be positive");
        return ExitCode::from(2);
    }
    let cfg = ToolConfig {
        mode: match args.command {
            Command::Analyze => Mode::Analyze,
            Command::Approx => Mode::Approx,
            Command::Bench => Mode::Bench,
        },
        target_error: args.target_error,
        error_scale: args.error_scale,
        distribution: args.distribution,
        depth: args.depth,
        degrees: args.degrees,
        timeout_per_call: Duration::from_secs_f64(args.timeout_per_call),
        max_pieces: args.max_splits,
        format: match args.format {
            Format::F64 => FloatFormat::Binary64,
            Format::F32 => FloatFormat::Binary32,
        },
        out_dir: args.out,
        seed: args.seed,
        accuracy_samples: args.samples,
        bench_samples: approxcc::bench::DEFAULT_SAMPLES,
        bench_runs: args.runs,
    };
    let files = match collect_inputs(&args.files) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            eprintln!("approxcc: no input programs");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("approxcc: {e}");
            return ExitCode::from(2);
        }
    };
    let report = run_batch(&files, &cfg);
    for b in &report.benchmarks {
        let status = if b.ok {
            "ok".to_string()
        } else {
            format!("{:?}", b.reason.unwrap())
        };
        let bound = b
            .final_bound
            .or(b.libm_bound)
            .map(|v| format!("{v:.3e}"))
            .unwrap_or_else(|| "-".into());
        eprintln!("{:<20} {:<20} {bound}", b.name, status);
        if let Some(m) = &b.message {
            eprintln!("{:<20} {m}", "");
        }
    }
    let json = report.to_json();
    match &args.report {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("approxcc: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{json}"),
    }
    if let Some(path) = &args.csv {
        if let Err(e) = std::fs::write(path, report.to_csv()) {
            eprintln!("approxcc: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if report.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
