use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmd"))
        .args(args)
        .env("MMD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_into(dir: &Path) {
    let out = mmd(&[
        "synth",
        "--example",
        "ex4_1",
        "--samples",
        "8192",
        "--seed",
        "5",
        "--out",
        p(dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_then_mmd_writes_full_decomposition() {
    let tmp = TempDir::new().unwrap();
    let s = tmp.path().join("s");
    let m = tmp.path().join("m");
    synth_into(&s);
    for f in [
        "signal.csv",
        "phases.csv",
        "synth.json",
        "truth/mode_1.csv",
        "truth/shape_2.csv",
    ] {
        assert!(s.join(f).exists(), "missing {f}");
    }
    let out = mmd(&[
        "mmd",
        "--signal",
        p(&s.join("signal.csv")),
        "--phases",
        p(&s.join("phases.csv")),
        "--m0",
        "2",
        "--j1",
        "20",
        "--out",
        p(&m),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "mode_1.csv",
        "mode_2.csv",
        "residual.csv",
        "coefficients.csv",
        "report.json",
    ] {
        assert!(m.join(f).exists(), "missing {f}");
    }
    // Five bands per carrier per component.
    let shapes = std::fs::read_dir(m.join("shapes")).unwrap().count();
    assert_eq!(shapes, 2 * 5 * 2 * 2);
    let report = mmd_core::io::read_report(m.join("report.json")).unwrap();
    assert!(report.residual_norms.last().unwrap() < &1e-2);
    assert!(report.gamma.is_some());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let s = tmp.path().join("s");
    synth_into(&s);
    let run = |name: &str| {
        let out_dir = tmp.path().join(name);
        let out = mmd(&[
            "gmd",
            "--signal",
            p(&s.join("signal.csv")),
            "--phases",
            p(&s.join("phases.csv")),
            "--max-iter",
            "10",
            "--out",
            p(&out_dir),
        ]);
        assert!(out.status.success());
        std::fs::read(out_dir.join("report.json")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    // The report embeds the output path; compare with it masked.
    let mask = |bytes: Vec<u8>, name: &str| {
        String::from_utf8(bytes)
            .unwrap()
            .replace(p(&tmp.path().join(name)), "OUT")
    };
    assert_eq!(mask(a, "a"), mask(b, "b"));
}

#[test]
fn unknown_flag_exits_with_validation_code() {
    let out = mmd(&["mmd", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(mmd(&["--help"]).status.code(), Some(0));
    assert_eq!(mmd(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_with_io_code() {
    let tmp = TempDir::new().unwrap();
    let out = mmd(&[
        "gmd",
        "--signal",
        "/nonexistent/signal.csv",
        "--phases",
        "/nonexistent/phases.csv",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_parameters_exit_with_validation_code() {
    let tmp = TempDir::new().unwrap();
    let s = tmp.path().join("s");
    synth_into(&s);
    let out = mmd(&[
        "gmd",
        "--signal",
        p(&s.join("signal.csv")),
        "--phases",
        p(&s.join("phases.csv")),
        "--eps",
        "2",
        "--out",
        p(&tmp.path().join("g")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = mmd(&[
        "diagnose",
        "--phases",
        p(&s.join("phases.csv")),
        "--h",
        "0.3",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn diagnose_writes_both_reports() {
    let tmp = TempDir::new().unwrap();
    let s = tmp.path().join("s");
    synth_into(&s);
    let d = tmp.path().join("d");
    let out = mmd(&[
        "diagnose",
        "--phases",
        p(&s.join("phases.csv")),
        "--residual",
        p(&s.join("signal.csv")),
        "--max-lag",
        "10",
        "--out",
        p(&d),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let acf = std::fs::read_to_string(d.join("autocorrelation.csv")).unwrap();
    assert_eq!(acf.lines().count(), 12);
    assert!(d.join("well_differentiation.json").exists());
}

#[test]
fn spec_file_synthesis() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"components":[{"amplitude":{"constant":1.0},
            "phase":{"linear":1.0},
            "fundamental":40,
            "shape":{"kind":"cosine","harmonic":1}}]}"#,
    )
    .unwrap();
    let out = mmd(&[
        "synth",
        "--spec",
        p(&spec),
        "--samples",
        "1024",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sig = mmd_core::io::read_signal_csv(tmp.path().join("o/signal.csv")).unwrap();
    assert_eq!(sig.len(), 1024);
    assert!((sig.rms() - 1.0).abs() < 1e-9);
}
