use std::path::Path;
use std::process::Command;

fn portdim(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_portdim")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = portdim(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pipeline_writes_reproducible_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--out", "sim", "-t", "20000", "--seed", "4", "simulate"]);
    let csv = std::fs::read_to_string(d.join("sim/returns.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.contains(", seed=4\n"));
    assert_eq!(csv.lines().count(), 20_002);
    assert!(d.join("sim/run.json").exists());

    ok(d, &["--out", "mom", "--returns", "sim/returns.csv", "build-moments"]);
    for k in ["a", "b"] {
        ok(d, &["--out", k, "--moments", "mom/moments.json", "optimize-bb", "--mode", "lp2", "--n-c", "2"]);
    }
    let a = std::fs::read(d.join("a/result.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/result.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["version"], "1");
    assert_eq!(v["result"]["status"], "optimal");
    let trace = std::fs::read_to_string(d.join("a/trace.csv")).unwrap();
    assert_eq!(trace.lines().nth(1), Some("iteration,lb,ub,fraction_deleted"));

    ok(d, &["--out", "g", "--moments", "mom/moments.json", "optimize-gld", "--n-sim", "8", "--n-iter", "50"]);
    for f in ["result.json", "path_best.csv", "traces.csv", "histograms.csv", "run.json"] {
        assert!(d.join("g").join(f).exists(), "{f}");
    }

    ok(d, &["--out", "dim", "--moments", "mom/moments.json", "dimensionality", "--weights", "a/result.json"]);
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("dim/result.json")).unwrap()).unwrap();
    assert!(rep["result"]["dimensionality"].as_f64().unwrap() > 1.0);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.json"), r#"{"sample_size": 3000, "seed": 9, "output_dir": "from_cfg"}"#).unwrap();
    ok(d, &["--config", "cfg.json", "simulate"]);
    let csv = std::fs::read_to_string(d.join("from_cfg/returns.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3002);
    assert!(csv.contains("seed=9"));
    ok(d, &["--config", "cfg.json", "--seed", "10", "--out", "flag", "simulate"]);
    assert!(std::fs::read_to_string(d.join("flag/returns.csv")).unwrap().contains("seed=10"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("w.json"), "[0.5, 0.7, -0.2]").unwrap();
    let out = portdim(d, &["-t", "2000", "dimensionality", "--weights", "w.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = portdim(d, &["--rho", "1.5", "simulate"]);
    assert!(!out.status.success());
}
