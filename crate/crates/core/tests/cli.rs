use std::path::Path;
use std::process::{Command, Output};

use percdetect::app::{detect_image, image_to_observed, observed_to_image, simulate_image, Command as Cmd, RunConfig};
use percdetect::pgm::load_pgm;
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_percdetect")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_detect_bright_square() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let sim = bin(&["simulate", "--n", "48", "--sigma", "0.7", "--seed", "4", "--out", s(out)]);
    assert_eq!(sim.status.code(), Some(0), "{}", String::from_utf8_lossy(&sim.stderr));
    let pgm = out.join("simulated.pgm");
    let det = bin(&["detect", "--input", s(&pgm), "--sigma", "0.7", "--replicates", "300", "--out", s(out)]);
    assert_eq!(det.status.code(), Some(0), "{}", String::from_utf8_lossy(&det.stderr));
    let report = json(&out.join("detection_report.json"));
    assert_eq!(report["decision"], "reject");
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 0);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["uncertainty"]["detectable"].as_bool().unwrap());
}

#[test]
fn file_roundtrip_reproduces_in_memory_decision() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, intensity) in [(1u64, 0.0), (2, 0.3), (3, 1.0)] {
        let mut cfg = RunConfig::new(Cmd::Simulate);
        cfg.n = Some(32);
        cfg.seed = seed;
        cfg.intensity = intensity;
        cfg.out = dir.path().to_path_buf();
        let image = simulate_image(&cfg).unwrap();
        percdetect::app::run(&cfg).unwrap();

        // in memory, quantized exactly as the file is
        let quantized = image_to_observed(&observed_to_image(&image, cfg.r, cfg.maxval).unwrap(), cfg.r, None, 32).unwrap();
        let mut dcfg = RunConfig::new(Cmd::Detect);
        dcfg.phi_mode = percdetect::app::PhiModeArg::Theory;
        dcfg.k0 = Some(8.0);
        let in_memory = detect_image(&dcfg, &quantized).unwrap();
        let from_file = image_to_observed(&load_pgm(dir.path().join("simulated.pgm")).unwrap(), cfg.r, None, 32).unwrap();
        assert_eq!(from_file, quantized);
        let via_file = detect_image(&dcfg, &from_file).unwrap();
        assert_eq!(in_memory.decision, via_file.decision);
        assert_eq!(in_memory, via_file);
    }
}

#[test]
fn config_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "# null calibration\nn = 24\nreplicates = 150\nseed = 31\nnoise = laplace\ntau = 0.4\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(bin(&["calibrate", "--config", s(&cfg_path), "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(
        bin(&["calibrate", "--config", s(&cfg_path), "--out", s(&b), "--workers", "2"]).status.code(),
        Some(0)
    );
    let ja = std::fs::read(a.join("calibration.json")).unwrap();
    assert_eq!(ja, std::fs::read(b.join("calibration.json")).unwrap());
    let table = json(&a.join("calibration.json"));
    assert_eq!(table["N"], 24);
    assert_eq!(table["seed"], 31);
    assert_eq!(table["family"], "laplace");

    // flags override file entries and change the hash
    let c = dir.path().join("c");
    assert_eq!(bin(&["calibrate", "--config", s(&cfg_path), "--seed", "32", "--out", s(&c)]).status.code(), Some(0));
    let other = json(&c.join("calibration.json"));
    assert_eq!(other["seed"], 32);
    assert_ne!(other["config_hash"], table["config_hash"]);
}

#[test]
fn undetectable_setting_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(bin(&["simulate", "--n", "4", "--square", "2", "--out", s(out)]).status.code(), Some(0));
    let det = bin(&[
        "detect",
        "--input",
        s(&out.join("simulated.pgm")),
        "--phi-mode",
        "theory",
        "--sigma",
        "1000",
        "--out",
        s(out),
    ]);
    assert_eq!(det.status.code(), Some(2));
    let report = json(&out.join("detection_report.json"));
    assert_eq!(report["decision"], "not_detectable");
    assert_eq!(report["uncertainty"]["detectable"], false);
    assert!(report["uncertainty"]["lhs"].as_f64().unwrap() < report["uncertainty"]["rhs"].as_f64().unwrap());
}

#[test]
fn failures_exit_one_with_error_json() {
    let unknown = bin(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&unknown.stderr);
    assert!(stderr.contains("Usage"));
    let last: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(last["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let missing = bin(&["detect", "--input", s(&out.join("absent.pgm")), "--out", s(out)]);
    assert_eq!(missing.status.code(), Some(1));
    let err = json(&out.join("error.json"));
    assert_eq!(err["error"], "io");
    assert_eq!(err["command"], "detect");

    let no_input = bin(&["detect", "--out", s(out)]);
    assert_eq!(no_input.status.code(), Some(1));
    assert_eq!(json(&out.join("error.json"))["error"], "config");

    std::fs::write(out.join("bad.pgm"), b"P5\n4 4\n255\nab").unwrap();
    let bad = bin(&["detect", "--input", s(&out.join("bad.pgm")), "--out", s(out)]);
    assert_eq!(bad.status.code(), Some(1));
    let err = json(&out.join("error.json"));
    assert_eq!(err["error"], "pgm");
    assert!(err["message"].as_str().unwrap().contains("unexpected end of pixel data"));

    let big = bin(&["detect", "--input", s(&out.join("bad.pgm")), "--n", "0", "--out", s(out)]);
    assert_eq!(big.status.code(), Some(1));

    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn remaining_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let run = |args: &[&str]| {
        let mut full = args.to_vec();
        full.extend(["--out", s(out)]);
        let o = bin(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["uncertainty", "--n", "16", "--noise", "student_t nu=4"]);
    let u = json(&out.join("uncertainty.json"));
    assert_eq!(u["nondegeneracy"]["ok"], true);
    assert!(u["tau0"].as_f64().unwrap() > 0.0);

    run(&["errors", "--ns", "12,16", "--replicates", "60", "--phi-mode", "theory", "--k0", "5"]);
    let csv = std::fs::read_to_string(out.join("error_rates.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().filter(|l| l.starts_with("12,") || l.starts_with("16,")).count(), 2);

    run(&["perclab", "--ns", "16,24", "--p", "0.3", "--replicates", "50", "--complexity"]);
    let p = json(&out.join("perclab.json"));
    assert_eq!(p["entries"].as_array().unwrap().len(), 2);
    assert!(out.join("tail_N16_p0.3.csv").exists());
    assert!(out.join("crossing.csv").exists());
    assert!(out.join("complexity.csv").exists());
}
