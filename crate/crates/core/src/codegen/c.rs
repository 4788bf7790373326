//! C99 text emission.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::approxgen::{ApproxImpl, Piece, Reduction, SHIFTER};
use crate::expr::{RealExpr, UnaryOp};
use crate::format::FloatFormat;
use crate::hexfloat::{format_f32, format_f64};

use super::{CompiledProgram, KernelEntry, Manifest};

pub const COMPILE_FLAGS: &str = "-O2 -std=c99 -ffp-contract=off -fno-fast-math";

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "main",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SourceBundle {
    pub name: String,
    /// (file name, contents), manifest excluded.
    pub files: Vec<(String, String)>,
    pub manifest: Manifest,
}

impl SourceBundle {
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            fs::write(dir.join(name), text)?;
        }
        let json = serde_json::to_string_pretty(&self.manifest).map_err(io::Error::other)?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(dir.join("build.sh"), fs::Permissions::from_mode(0o755))?;
        }
        Ok(())
    }
}

/// A valid C identifier for `name`, unchanged when it already is one.
pub fn c_identifier(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty()
        || s.starts_with(|c: char| c.is_ascii_digit())
        || KEYWORDS.contains(&s.as_str())
        || s.starts_with("__")
    {
        s.insert_str(0, "v_");
    }
    s
}

fn ctype(fmt: FloatFormat) -> &'static str {
    if fmt.is_single() {
        "float"
    } else {
        "double"
    }
}

fn literal(v: f64) -> String {
    let s = format_f64(v);
    if s.starts_with('-') {
        format!("({s})")
    } else {
        s
    }
}

fn libm_name(op: UnaryOp, fmt: FloatFormat) -> String {
    let base = match op {
        UnaryOp::Sqrt => "sqrt",
        UnaryOp::Sin => "sin",
        UnaryOp::Cos => "cos",
        UnaryOp::Tan => "tan",
        UnaryOp::Exp => "exp",
        UnaryOp::Log => "log",
        UnaryOp::Neg => unreachable!("negation is an operator"),
    };
    if fmt.is_single() {
        format!("{base}f")
    } else {
        base.to_string()
    }
}

/// Fully parenthesized, so the compiler sees the analyzed tree.
fn expr(e: &RealExpr, fmt: FloatFormat) -> String {
    match e {
        RealExpr::Const(c) => {
            if fmt.is_single() {
                let s = format_f32(c.value32());
                if s.starts_with('-') {
                    format!("({s})")
                } else {
                    s
                }
            } else {
                literal(c.value())
            }
        }
        RealExpr::Var(v) => c_identifier(v),
        RealExpr::Unary(UnaryOp::Neg, a) => format!("(-{})", expr(a, fmt)),
        RealExpr::Unary(op, a) => format!("{}({})", libm_name(*op, fmt), expr(a, fmt)),
        RealExpr::Binary(op, l, r) => {
            format!("({} {} {})", expr(l, fmt), op.symbol(), expr(r, fmt))
        }
    }
}

fn horner(p: &Piece) -> String {
    let mut rev = p.coeffs.iter().rev();
    let mut acc = literal(*rev.next().unwrap_or(&0.0));
    for &c in rev {
        acc = format!("({} + (t * {}))", literal(c), acc);
    }
    acc
}

fn kernel_header(symbol: &str, imp: &ApproxImpl) -> String {
    let guard = format!("{}_H", symbol.to_ascii_uppercase());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "/* {} on [{}, {}], {} reduction, {} piece(s), |error| <= {:e} */",
        imp.function,
        format_f64(imp.domain.lo),
        format_f64(imp.domain.hi),
        imp.reduction.name(),
        imp.pieces.len(),
        imp.certified_error
    );
    let _ = writeln!(
        s,
        "#ifndef {guard}\n#define {guard}\n\n#include <stdint.h>\n#include <string.h>\n"
    );
    let _ = writeln!(s, "static inline double {symbol}_poly(double x)\n{{");
    let (last, rest) = imp.pieces.split_last().expect("at least one piece");
    let body = |p: &Piece| {
        let t = if p.center == 0.0 {
            "x".to_string()
        } else {
            format!("(x - {})", literal(p.center))
        };
        format!("const double t = {t};\n        return {};", horner(p))
    };
    for p in rest {
        let _ = writeln!(
            s,
            "    if (x <= {}) {{\n        {}\n    }}",
            literal(p.domain.hi),
            body(p)
        );
    }
    let _ = writeln!(s, "    {{\n        {}\n    }}\n}}\n", body(last));
    let _ = writeln!(s, "static inline double {symbol}(double x)\n{{");
    let shifter = literal(SHIFTER);
    match imp.reduction {
        Reduction::None => {
            let _ = writeln!(s, "    return {symbol}_poly(x);");
        }
        Reduction::OddFold => {
            let _ = writeln!(s, "    if (x < 0.0) {{\n        return -{symbol}_poly(-x);\n    }}\n    return {symbol}_poly(x);");
        }
        Reduction::EvenFold => {
            let _ = writeln!(s, "    return {symbol}_poly(x < 0.0 ? -x : x);");
        }
        Reduction::Periodic { inv, c1, c2 } => {
            let _ = writeln!(
                s,
                "    const double kd = ((x * {}) + {shifter}) - {shifter};\n    return {symbol}_poly((x - (kd * {})) - (kd * {}));",
                literal(inv),
                literal(c1),
                literal(c2)
            );
        }
        Reduction::ExpScale { inv, c1, c2 } => {
            let _ = writeln!(
                s,
                "    const double kd = ((x * {}) + {shifter}) - {shifter};\n    const double p = {symbol}_poly((x - (kd * {})) - (kd * {}));\n    const uint64_t b = (uint64_t)((int64_t)kd + 1023) << 52;\n    double scale;\n    memcpy(&scale, &b, sizeof scale);\n    return p * scale;",
                literal(inv),
                literal(c1),
                literal(c2)
            );
        }
        Reduction::LogMantissa { c1, c2, sqrt2 } => {
            let _ = writeln!(
                s,
                "    uint64_t b;\n    memcpy(&b, &x, sizeof b);\n    int64_t e = (int64_t)((b >> 52) & 0x7ff) - 1023;\n    const uint64_t mb = (b & UINT64_C(0x000fffffffffffff)) | UINT64_C(0x3ff0000000000000);\n    double m;\n    memcpy(&m, &mb, sizeof m);\n    if (m > {}) {{\n        m = m * 0.5;\n        e = e + 1;\n    }}\n    const double ed = (double)e;\n    return (ed * {}) + ((ed * {}) + {symbol}_poly(m));",
                literal(sqrt2),
                literal(c1),
                literal(c2)
            );
        }
    }
    let _ = writeln!(s, "}}\n\n#endif");
    s
}

fn signature(c: &CompiledProgram, name: &str) -> String {
    let t = ctype(c.fmt);
    let params: Vec<String> = c
        .params
        .iter()
        .map(|p| format!("{t} {}", c_identifier(p)))
        .collect();
    let params = if params.is_empty() {
        "void".to_string()
    } else {
        params.join(", ")
    };
    format!("{t} {name}({params})")
}

fn function(c: &CompiledProgram, name: &str, approx: bool) -> String {
    let t = ctype(c.fmt);
    let mut s = format!("{}\n{{\n", signature(c, name));
    for l in &c.lets {
        let rhs = match (&l.call, approx) {
            (Some((k, arg)), true) => {
                let call = format!("{}({})", c.kernels[*k].symbol, expr(arg, c.fmt));
                if c.fmt.is_single() {
                    // The argument promotes exactly; the result rounds once.
                    format!("(float){call}")
                } else {
                    call
                }
            }
            _ => expr(&l.expr, c.fmt),
        };
        let _ = writeln!(s, "    const {t} {} = {rhs};", c_identifier(&l.name));
    }
    let _ = writeln!(s, "    return {};\n}}", expr(&c.result, c.fmt));
    s
}

fn driver(c: &CompiledProgram, entry: &str) -> String {
    let t = ctype(c.fmt);
    let k = c.params.len();
    let args: Vec<String> = (0..k).map(|j| format!("({t})x[i * {k} + {j}]")).collect();
    let args = args.join(", ");
    format!(
        r#"/* Benchmark driver: {entry} [approx|libm] RUNS INPUT OUTPUT
 * INPUT holds two uint64 (count, arity) and count*arity doubles.
 * OUTPUT receives count doubles (results) and RUNS*count uint64 timings. */
#define _POSIX_C_SOURCE 199309L
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

#if defined(__x86_64__) || defined(__i386__)
#include <x86intrin.h>
#define TIMER "rdtsc"
static inline uint64_t now(void)
{{
    _mm_lfence();
    const uint64_t t = __rdtsc();
    _mm_lfence();
    return t;
}}
#else
#define TIMER "monotonic_ns"
static inline uint64_t now(void)
{{
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (uint64_t)ts.tv_sec * UINT64_C(1000000000) + (uint64_t)ts.tv_nsec;
}}
#endif

{sig_approx};
{sig_libm};

int main(int argc, char **argv)
{{
    if (argc != 5) {{
        fprintf(stderr, "usage: %s approx|libm RUNS INPUT OUTPUT\n", argv[0]);
        return 2;
    }}
    const int libm = strcmp(argv[1], "libm") == 0;
    const long runs = atol(argv[2]);
    FILE *in = fopen(argv[3], "rb");
    uint64_t head[2];
    if (!in || fread(head, sizeof head[0], 2, in) != 2 || head[1] != {k}) {{
        fprintf(stderr, "bad input file\n");
        return 1;
    }}
    const size_t n = (size_t)head[0];
    double *x = malloc(sizeof *x * (n * {k} + 1));
    double *out = malloc(sizeof *out * (n + 1));
    uint64_t *ticks = malloc(sizeof *ticks * (n * (size_t)runs + 1));
    if (!x || !out || !ticks || fread(x, sizeof *x, n * {k}, in) != n * {k}) {{
        fprintf(stderr, "cannot read inputs\n");
        return 1;
    }}
    fclose(in);
    for (size_t i = 0; i < n; i++) {{
        out[i] = libm ? (double){libm_entry}({args}) : (double){entry}({args});
    }}
    for (long r = 0; r < runs; r++) {{
        for (size_t i = 0; i < n; i++) {{
            const uint64_t t0 = now();
            const double v = libm ? (double){libm_entry}({args}) : (double){entry}({args});
            const uint64_t t1 = now();
            out[i] = v;
            ticks[(size_t)r * n + i] = t1 - t0;
        }}
    }}
    FILE *o = fopen(argv[4], "wb");
    if (!o || fwrite(out, sizeof *out, n, o) != n || fwrite(ticks, sizeof *ticks, n * (size_t)runs, o) != n * (size_t)runs) {{
        fprintf(stderr, "cannot write output\n");
        return 1;
    }}
    fclose(o);
    printf("%s\n", TIMER);
    return 0;
}}
"#,
        sig_approx = signature(c, entry),
        sig_libm = signature(c, &format!("{entry}_libm")),
        libm_entry = format!("{entry}_libm"),
    )
}

pub(super) fn manifest(c: &CompiledProgram) -> Manifest {
    let base = c_identifier(&c.name);
    let kernels = c
        .kernels
        .iter()
        .map(|k| {
            let argument = c
                .lets
                .iter()
                .find(|l| l.name == k.binding)
                .and_then(|l| l.call.as_ref())
                .map(|(_, a)| a.to_string())
                .unwrap_or_default();
            KernelEntry {
                symbol: k.symbol.clone(),
                binding: k.binding.to_string(),
                function: k.imp.function.to_string(),
                argument,
                header: format!("{}.h", k.symbol),
                reduction: k.imp.reduction.name().to_string(),
                degree: k.imp.degree,
                pieces: k.imp.pieces.len(),
                certified_error: k.imp.certified_error,
                cost: k.imp.cost,
            }
        })
        .collect::<Vec<_>>();
    let mut files = vec![format!("{base}.c"), format!("{base}_kernels.h")];
    files.extend(kernels.iter().map(|k| k.header.clone()));
    files.extend([format!("{base}_driver.c"), "build.sh".to_string()]);
    let libm_fallbacks = c
        .lets
        .iter()
        .filter(|l| l.call.is_none() && l.expr.contains_elementary())
        .map(|l| l.name.to_string())
        .collect();
    Manifest {
        program: c.name.clone(),
        format: c.fmt,
        entry: base.clone(),
        libm_entry: format!("{base}_libm"),
        kernels,
        libm_fallbacks,
        files,
    }
}

pub(super) fn bundle(c: &CompiledProgram) -> SourceBundle {
    let base = c_identifier(&c.name);
    let manifest = manifest(c);
    let mut files = Vec::new();

    let guard = format!("{}_KERNELS_H", base.to_ascii_uppercase());
    let mut header = format!("#ifndef {guard}\n#define {guard}\n\n");
    for k in &c.kernels {
        let _ = writeln!(header, "#include \"{}.h\"", k.symbol);
    }
    header.push_str("\n#endif\n");

    let mut program = format!("#include <math.h>\n#include \"{base}_kernels.h\"\n\n");
    program.push_str(&function(c, &base, true));
    program.push('\n');
    program.push_str(&function(c, &format!("{base}_libm"), false));

    files.push((format!("{base}.c"), program));
    files.push((format!("{base}_kernels.h"), header));
    for k in &c.kernels {
        files.push((format!("{}.h", k.symbol), kernel_header(&k.symbol, &k.imp)));
    }
    files.push((format!("{base}_driver.c"), driver(c, &base)));
    let script = format!(
        "#!/bin/sh\n# Builds the program object and its benchmark driver.\nset -e\ncd \"$(dirname \"$0\")\"\nCC=\"${{CC:-cc}}\"\nCFLAGS=\"{COMPILE_FLAGS}\"\n$CC $CFLAGS -c {base}.c -o {base}.o\n$CC $CFLAGS {base}_driver.c {base}.o -o {base}_driver -lm\n"
    );
    files.push(("build.sh".to_string(), script));
    SourceBundle {
        name: c.name.clone(),
        files,
        manifest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexfloat::parse_f64;

    #[test]
    fn horner_is_nested() {
        let p = Piece {
            domain: crate::numerics::Interval::new(0.0, 1.0),
            center: 0.0,
            coeffs: vec![1.0, 2.0, 3.0],
            certified_error: 0.0,
        };
        assert_eq!(horner(&p), "(0x1p+0 + (t * (0x1p+1 + (t * 0x1.8p+1))))");
    }

    #[test]
    fn literals_round_trip() {
        for v in [
            0.1,
            -2.5e-300,
            1.0 / 3.0,
            f64::MIN_POSITIVE / 8.0,
            6.283185307179586,
        ] {
            let s = literal(v);
            let s = s.trim_start_matches('(').trim_end_matches(')');
            assert_eq!(parse_f64(s).unwrap().to_bits(), v.to_bits());
        }
    }

    fn same_shape(a: &RealExpr, b: &RealExpr) -> bool {
        match (a, b) {
            (RealExpr::Const(x), RealExpr::Const(y)) => x.value().to_bits() == y.value().to_bits(),
            (RealExpr::Var(x), RealExpr::Var(y)) => x == y,
            (RealExpr::Unary(o, x), RealExpr::Unary(p, y)) => o == p && same_shape(x, y),
            (RealExpr::Binary(o, x1, x2), RealExpr::Binary(p, y1, y2)) => {
                o == p && same_shape(x1, y1) && same_shape(x2, y2)
            }
            _ => false,
        }
    }

    // Reading the emitted C back must give the analyzed tree, node for node.
    #[test]
    fn emitted_expressions_are_not_reassociated() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus");
        let mut checked = 0;
        for entry in fs::read_dir(dir).unwrap() {
            let text = fs::read_to_string(entry.unwrap().path()).unwrap();
            let p = crate::frontend::decompose(
                &crate::frontend::parse_program(&text).unwrap(),
                crate::frontend::Depth(0),
            );
            let exprs = p.lets.iter().map(|l| &l.expr).chain([&p.result]);
            for e in exprs {
                let mut vars: Vec<_> = e.free_vars().into_iter().collect();
                if vars.is_empty() {
                    vars.push("z".into());
                }
                let params: Vec<String> = vars.iter().map(|v| format!("{v}: Real")).collect();
                let pre: Vec<String> = vars
                    .iter()
                    .map(|v| format!("0 <= {v} && {v} <= 1"))
                    .collect();
                let src = format!(
                    "def t({}): Real = {{\n require({})\n {} }}",
                    params.join(", "),
                    pre.join(" && "),
                    expr(e, FloatFormat::Binary64)
                );
                let back = crate::frontend::parse_program(&src).unwrap();
                assert!(same_shape(&back.result, e), "{e} printed as {src}");
                checked += 1;
            }
        }
        assert!(checked > 21);
    }

    #[test]
    fn identifiers() {
        assert_eq!(c_identifier("x1"), "x1");
        assert_eq!(c_identifier("double"), "v_double");
        assert_eq!(c_identifier("_tmp0"), "_tmp0");
    }
}
