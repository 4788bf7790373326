//! The emitted C must compute exactly what the internal evaluator computes,
//! since the certificate is checked against the latter.

use std::path::Path;
use std::process::Command;

use approxcc::bench::{self, Variant};
use approxcc::format::FloatFormat;
use approxcc::pipeline::{run_source, ToolConfig};

fn have_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

fn check(name: &str, format: FloatFormat, target_error: Option<f64>) {
    if !have_cc() {
        eprintln!("no C compiler; skipping {name}");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(format!("{name}.real"));
    let text = std::fs::read_to_string(&path).unwrap();
    let cfg = ToolConfig {
        format,
        target_error,
        out_dir: Some(dir.path().to_path_buf()),
        accuracy_samples: 0,
        ..Default::default()
    };
    let out = run_source(name, &path.display().to_string(), &text, &cfg);
    assert!(out.report.ok, "{:?}", out.report.message);
    let compiled = out.compiled.unwrap();
    assert!(!compiled.kernels.is_empty());
    let emitted = Path::new(out.report.emitted.as_deref().unwrap());
    let exe = bench::build(emitted, name).unwrap();

    let domains: Vec<_> = out
        .program
        .unwrap()
        .params
        .iter()
        .map(|q| q.domain(format))
        .collect();
    let inputs = bench::sample_inputs(&domains, 1000, 11);
    let (approx, ticks, _) = exe.run(Variant::Approx, &inputs, 1).unwrap();
    let (libm, _, _) = exe.run(Variant::Libm, &inputs, 1).unwrap();
    assert_eq!(ticks.len(), 1);
    for (i, x) in inputs.iter().enumerate() {
        let want = compiled.eval(x).unwrap();
        assert_eq!(
            approx[i].to_bits(),
            want.to_bits(),
            "{name} approx at {x:?}: C {:e} vs {want:e}",
            approx[i]
        );
        let want = compiled.eval_libm(x).unwrap();
        assert_eq!(
            libm[i].to_bits(),
            want.to_bits(),
            "{name} libm at {x:?}: C {:e} vs {want:e}",
            libm[i]
        );
    }
}

#[test]
fn ex2_1_binary64() {
    check("ex2_1", FloatFormat::Binary64, None);
}

#[test]
fn forwardk2j_y_binary64() {
    check("forwardk2jY", FloatFormat::Binary64, None);
}

#[test]
fn forwardk2j_y_binary32() {
    check("forwardk2jY", FloatFormat::Binary32, Some(1e-5));
}

#[test]
fn pendulum2_binary64() {
    check("pendulum2", FloatFormat::Binary64, None);
}
