//! CLI behavior: file shapes, determinism, exit codes, and the report
//! post-processing path.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bsgl"))
}

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bsgl_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn simulate_writes_requested_shape() {
    let dir = fresh_dir("simshape");
    let status = bin()
        .args(["simulate", "--n", "1000", "--m", "10", "--seed", "7"])
        .args(["--out-dir", dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let data = read(&dir.join("dataset.csv"));
    let mut lines = data.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, "u,v,y,x1,x2,x3,x4,x5,x6,x7,x8,x9,x10");
    assert_eq!(lines.count(), 1000);
    let truth = read(&dir.join("truth.csv"));
    assert!(truth.lines().next().unwrap().starts_with("u,v,beta_x1"));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn simulate_is_byte_deterministic() {
    let a = fresh_dir("sima");
    let b = fresh_dir("simb");
    for dir in [&a, &b] {
        let status = bin()
            .args(["simulate", "--n", "200", "--m", "5", "--seed", "99"])
            .args(["--out-dir", dir.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&a.join("dataset.csv")), read(&b.join("dataset.csv")));
    assert_eq!(read(&a.join("truth.csv")), read(&b.join("truth.csv")));
}

fn small_dataset(dir: &Path, n: usize, m: usize, seed: u64) -> PathBuf {
    let status = bin()
        .args(["simulate", "--n", &n.to_string(), "--m", &m.to_string(), "--seed", &seed.to_string()])
        .args(["--out-dir", dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    dir.join("dataset.csv")
}

#[test]
fn fit_run_is_byte_deterministic_and_complete() {
    let base = fresh_dir("fitdet");
    let data = small_dataset(&base, 250, 4, 3);
    let out1 = base.join("run1");
    let out2 = base.join("run2");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["fit", "--data", data.to_str().unwrap()])
            .args(["--l", "16", "--a-lambda", "15", "--b-lambda", "0.1"])
            .args(["--chains", "2", "--iters", "300", "--warmup", "100"])
            .args(["--seed", "11", "--save-samples"])
            .args(["--out-dir", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["surfaces.csv", "significance.csv", "scp.json", "samples.csv", "predictions.csv", "metrics.json", "convergence.json"] {
        assert!(out1.join(file).exists(), "{file} missing");
        assert_eq!(read(&out1.join(file)), read(&out2.join(file)), "{file} differs between reruns");
    }
    // The manifest lists every produced file.
    let manifest: serde_json::Value = serde_json::from_str(&read(&out1.join("manifest.json"))).unwrap();
    for listed in manifest["outputs"].as_array().unwrap() {
        assert!(out1.join(listed.as_str().unwrap()).exists());
    }
}

#[test]
fn fit_accepts_final_model_protocol_flags() {
    // The long-protocol invocation (8000 sweeps, 1000 warm-up, four chains)
    // must run end to end on a small dataset and echo the configuration.
    let base = fresh_dir("fitproto");
    let data = small_dataset(&base, 80, 3, 5);
    let out = base.join("out");
    let status = bin()
        .args(["fit", "--data", data.to_str().unwrap()])
        .args(["--l", "25", "--a-lambda", "20", "--b-lambda", "0.5"])
        .args(["--chains", "4", "--iters", "8000", "--warmup", "1000"])
        .args(["--seed", "1"])
        .args(["--out-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    let cfg = &manifest["config"];
    assert_eq!(cfg["n_iter"], 8000);
    assert_eq!(cfg["warmup"], 1000);
    assert_eq!(cfg["n_chains"], 4);
    assert_eq!(cfg["hyper"]["a_lambda"], 20.0);
    assert_eq!(cfg["hyper"]["b_lambda"], 0.5);
    assert_eq!(cfg["basis"]["per_dim_count"], 5);
}

#[test]
fn report_recomputes_at_new_level_without_refit() {
    let base = fresh_dir("report");
    let data = small_dataset(&base, 250, 4, 13);
    let fit_out = base.join("fit");
    let status = bin()
        .args(["fit", "--data", data.to_str().unwrap()])
        .args(["--l", "16", "--chains", "2", "--iters", "400", "--warmup", "100"])
        .args(["--seed", "2", "--save-samples"])
        .args(["--out-dir", fit_out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let rep_out = base.join("rep90");
    let status = bin()
        .args(["report"])
        .args(["--samples", fit_out.join("samples.csv").to_str().unwrap()])
        .args(["--manifest", fit_out.join("manifest.json").to_str().unwrap()])
        .args(["--ci-level", "0.90"])
        .args(["--out-dir", rep_out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let scp95: serde_json::Value = serde_json::from_str(&read(&fit_out.join("scp.json"))).unwrap();
    let scp90: serde_json::Value = serde_json::from_str(&read(&rep_out.join("scp.json"))).unwrap();
    let keys95: Vec<&String> = scp95.as_object().unwrap().keys().collect();
    let keys90: Vec<&String> = scp90.as_object().unwrap().keys().collect();
    assert_eq!(keys95, keys90);
    // Narrower intervals can only keep or grow each SCP.
    for k in keys95 {
        let v95 = scp95[k]["scp"].as_f64().unwrap();
        let v90 = scp90[k]["scp"].as_f64().unwrap();
        assert!(v90 >= v95 - 1e-12, "{k}: scp fell from {v95} to {v90} at lower level");
    }

    // Reprocessing at the fit's own level reproduces its SCP values.
    let rep_out95 = base.join("rep95");
    let status = bin()
        .args(["report"])
        .args(["--samples", fit_out.join("samples.csv").to_str().unwrap()])
        .args(["--manifest", fit_out.join("manifest.json").to_str().unwrap()])
        .args(["--ci-level", "0.95"])
        .args(["--out-dir", rep_out95.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(&fit_out.join("scp.json")), read(&rep_out95.join("scp.json")));
}

#[test]
fn exit_codes_follow_the_contract() {
    // Unknown flag: usage error, exit 1.
    let out = bin().args(["fit", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Missing data file: data error, exit 2.
    let dir = fresh_dir("codes");
    let out = bin()
        .args(["fit", "--data", "/nonexistent/nope.csv"])
        .args(["--out-dir", dir.join("x").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing required column: data error naming the column, exit 2.
    let bad = dir.join("bad.csv");
    fs::write(&bad, "u,v,x1\n1,2,3\n").unwrap();
    let out = bin()
        .args(["fit", "--data", bad.to_str().unwrap()])
        .args(["--out-dir", dir.join("y").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'y'"));
}

#[test]
fn strict_gate_failure_exits_three_with_report_written() {
    let base = fresh_dir("strict");
    let data = small_dataset(&base, 150, 3, 17);
    let out = base.join("out");
    // An absurdly tight gate fails on any finite run; the report must still
    // be on disk afterwards.
    let status = bin()
        .args(["fit", "--data", data.to_str().unwrap()])
        .args(["--l", "16", "--chains", "2", "--iters", "150", "--warmup", "50"])
        .args(["--seed", "3", "--strict", "--rhat-threshold", "1.0000001"])
        .args(["--out-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(out.join("convergence.json").exists());
    assert!(out.join("surfaces.csv").exists());
}
