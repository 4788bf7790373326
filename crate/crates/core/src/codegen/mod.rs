//! Code generation: C sources for the approximated program, and an internal
//! evaluator that performs the same binary64/binary32 operations.

mod c;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::approxgen::ApproxImpl;
use crate::expr::RealExpr;
use crate::format::FloatFormat;
use crate::frontend::Program;
use crate::numerics::feval::{eval_in, EvalError};
use crate::numerics::Env;

pub use c::{c_identifier, SourceBundle, COMPILE_FLAGS};

/// How one approximation target is implemented.
#[derive(Debug, Clone, PartialEq)]
pub enum Implementation {
    Kernel(ApproxImpl),
    /// The target keeps its libm calls.
    Libm,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodegenError {
    #[error("target `{0}` has no implementation")]
    UnmappedTarget(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    /// C function name.
    pub symbol: String,
    pub binding: Arc<str>,
    pub imp: ApproxImpl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLet {
    pub name: Arc<str>,
    /// The binding as written, evaluated with libm.
    pub expr: RealExpr,
    /// Kernel index and argument, when the binding is approximated.
    pub call: Option<(usize, RealExpr)>,
}

/// The decomposed program with its kernels attached.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledProgram {
    pub name: String,
    pub fmt: FloatFormat,
    pub params: Vec<Arc<str>>,
    pub lets: Vec<CompiledLet>,
    pub result: RealExpr,
    pub kernels: Vec<Kernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelEntry {
    pub symbol: String,
    pub binding: String,
    pub function: String,
    pub argument: String,
    pub header: String,
    pub reduction: String,
    pub degree: usize,
    pub pieces: usize,
    pub certified_error: f64,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub program: String,
    pub format: FloatFormat,
    pub entry: String,
    pub libm_entry: String,
    pub kernels: Vec<KernelEntry>,
    pub libm_fallbacks: Vec<String>,
    pub files: Vec<String>,
}

/// Attaches implementations to the targets of a decomposed program.
pub fn emit_internal(
    p: &Program,
    impls: &BTreeMap<Arc<str>, Implementation>,
    fmt: FloatFormat,
) -> Result<CompiledProgram, CodegenError> {
    let mut kernels = Vec::new();
    let mut lets = Vec::with_capacity(p.lets.len());
    for l in &p.lets {
        let call = match l.target() {
            None => None,
            Some(t) => match impls.get(&l.name) {
                None => return Err(CodegenError::UnmappedTarget(l.name.to_string())),
                Some(Implementation::Libm) => None,
                Some(Implementation::Kernel(imp)) => {
                    let symbol = format!("{}_k{}", c_identifier(&p.name), kernels.len());
                    kernels.push(Kernel {
                        symbol,
                        binding: l.name.clone(),
                        imp: imp.clone(),
                    });
                    Some((kernels.len() - 1, t.argument.clone()))
                }
            },
        };
        lets.push(CompiledLet {
            name: l.name.clone(),
            expr: l.expr.clone(),
            call,
        });
    }
    Ok(CompiledProgram {
        name: p.name.clone(),
        fmt,
        params: p.params.iter().map(|q| q.name.clone()).collect(),
        lets,
        result: p.result.clone(),
        kernels,
    })
}

/// Emits the C sources.
pub fn emit(
    p: &Program,
    impls: &BTreeMap<Arc<str>, Implementation>,
    fmt: FloatFormat,
) -> Result<SourceBundle, CodegenError> {
    Ok(c::bundle(&emit_internal(p, impls, fmt)?))
}

impl CompiledProgram {
    fn bind(&self, inputs: &[f64]) -> Env<f64> {
        assert_eq!(inputs.len(), self.params.len(), "one value per parameter");
        let round = |v: f64| {
            if self.fmt.is_single() {
                v as f32 as f64
            } else {
                v
            }
        };
        self.params
            .iter()
            .cloned()
            .zip(inputs.iter().map(|&v| round(v)))
            .collect()
    }

    /// Evaluates the approximated program exactly as the emitted C does.
    /// Inputs are rounded to the program format first.
    pub fn eval(&self, inputs: &[f64]) -> Result<f64, EvalError> {
        let mut env = self.bind(inputs);
        for l in &self.lets {
            let v = match &l.call {
                Some((k, arg)) => {
                    let a = eval_in(self.fmt, arg, &env)?;
                    let v = self.kernels[*k].imp.eval(a);
                    if self.fmt.is_single() {
                        v as f32 as f64
                    } else {
                        v
                    }
                }
                None => eval_in(self.fmt, &l.expr, &env)?,
            };
            env.insert(l.name.clone(), v);
        }
        eval_in(self.fmt, &self.result, &env)
    }

    /// Evaluates with every target computed by libm.
    pub fn eval_libm(&self, inputs: &[f64]) -> Result<f64, EvalError> {
        let mut env = self.bind(inputs);
        for l in &self.lets {
            let v = eval_in(self.fmt, &l.expr, &env)?;
            env.insert(l.name.clone(), v);
        }
        eval_in(self.fmt, &self.result, &env)
    }

    pub fn manifest(&self) -> Manifest {
        c::manifest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approxgen::{search_degree, ApproxSpec};
    use crate::frontend::{decompose, parse_program, Depth, PLACEHOLDER};
    use crate::numerics::Interval;

    fn forwardk2j() -> Program {
        let src = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/corpus/forwardk2jY.real"
        ))
        .unwrap();
        decompose(&parse_program(&src).unwrap(), Depth(0))
    }

    fn sine_kernel() -> ApproxImpl {
        let f = RealExpr::unary(crate::expr::UnaryOp::Sin, RealExpr::var(PLACEHOLDER));
        search_degree(&ApproxSpec::new(f, Interval::new(-6.3, 6.3), 1e-13)).unwrap()
    }

    fn all(p: &Program, imp: Option<ApproxImpl>) -> BTreeMap<Arc<str>, Implementation> {
        p.targets()
            .map(|(_, l, _)| {
                (
                    l.name.clone(),
                    imp.clone()
                        .map_or(Implementation::Libm, Implementation::Kernel),
                )
            })
            .collect()
    }

    #[test]
    fn identity_program() {
        let p = parse_program("def id(x: Real): Real = { require(0 <= x && x <= 1)\n x }").unwrap();
        let c = emit_internal(&p, &BTreeMap::new(), FloatFormat::Binary64).unwrap();
        assert_eq!(c.eval(&[0.375]).unwrap(), 0.375);
        let b = emit(&p, &BTreeMap::new(), FloatFormat::Binary64).unwrap();
        assert!(b.manifest.kernels.is_empty());
    }

    #[test]
    fn unmapped_target_is_an_error() {
        let p = forwardk2j();
        assert!(matches!(
            emit_internal(&p, &BTreeMap::new(), FloatFormat::Binary64),
            Err(CodegenError::UnmappedTarget(_))
        ));
    }

    #[test]
    fn bundle_layout() {
        let p = forwardk2j();
        let b = emit(&p, &all(&p, Some(sine_kernel())), FloatFormat::Binary64).unwrap();
        assert_eq!(b.manifest.kernels.len(), 2);
        let names: Vec<&str> = b.files.iter().map(|(n, _)| n.as_str()).collect();
        for f in [
            "forwardk2jY.c",
            "forwardk2jY_kernels.h",
            "forwardk2jY_k0.h",
            "forwardk2jY_k1.h",
            "build.sh",
        ] {
            assert!(names.contains(&f), "{f} missing from {names:?}");
        }
        let libm = emit(&p, &all(&p, None), FloatFormat::Binary64).unwrap();
        assert!(libm.manifest.kernels.is_empty());
        assert!(!libm.files.iter().any(|(n, _)| n.ends_with("_k0.h")));
    }

    #[test]
    fn kernel_matches_call_site() {
        let p = forwardk2j();
        let k = sine_kernel();
        let c = emit_internal(&p, &all(&p, Some(k.clone())), FloatFormat::Binary64).unwrap();
        for i in 0..200 {
            let a = -3.14 + 6.28 * i as f64 / 199.0;
            let b = 3.14 - 6.28 * ((i * 37) % 200) as f64 / 199.0;
            let want = 0.5 * k.eval(a) + 2.5 * k.eval(a + b);
            assert_eq!(c.eval(&[a, b]).unwrap().to_bits(), want.to_bits());
            let libm = 0.5 * a.sin() + 2.5 * (a + b).sin();
            assert_eq!(c.eval_libm(&[a, b]).unwrap().to_bits(), libm.to_bits());
        }
    }
}
