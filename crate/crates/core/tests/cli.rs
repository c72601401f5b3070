use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_motiondiff");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_clear()
        .envs(env.iter().copied())
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn run(dir: &Path, args: &[&str]) -> Run {
    run_env(dir, args, &[])
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let r = run(dir, args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r.stdout
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn field(stdout: &str, key: &str) -> f64 {
    stdout
        .split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {stdout}"))
        .parse()
        .unwrap()
}

fn with_dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["make-codebook"]);
    ok(dir.path(), &["make-dataset"]);
    dir
}

#[test]
fn make_dataset_counts_and_is_reproducible() {
    let a = with_dataset();
    let b = with_dataset();
    let records = jsonl(&a.path().join("dataset.jsonl"));
    assert_eq!(records.len(), 100);
    assert_eq!(
        fs::read(a.path().join("dataset.jsonl")).unwrap(),
        fs::read(b.path().join("dataset.jsonl")).unwrap()
    );
    ok(
        a.path(),
        &["make-dataset", "--seed", "9", "--out", "other.jsonl"],
    );
    assert_ne!(
        fs::read(a.path().join("dataset.jsonl")).unwrap(),
        fs::read(a.path().join("other.jsonl")).unwrap()
    );
}

#[test]
fn manifest_records_run() {
    let dir = with_dataset();
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("dataset.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["command"], "make-dataset");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 64);
    assert!(m["wall_clock_s"].as_f64().unwrap() >= 0.0);
    assert!(m["inputs"]
        .as_object()
        .unwrap()
        .contains_key("codebook.txt"));
    assert!(m["outputs"]
        .as_object()
        .unwrap()
        .contains_key("dataset.jsonl"));
}

#[test]
fn corrupt_identity_and_mask_fraction() {
    let dir = with_dataset();
    let p = dir.path();
    ok(p, &["corrupt", "--t", "0"]);
    for r in jsonl(&p.join("corrupted.jsonl")) {
        assert_eq!(r["before"], r["after"]);
    }
    let out = ok(p, &["corrupt", "--t", "100", "--out", "c1.jsonl"]);
    let frac = field(&out, "mask_fraction");
    let n = field(&out, "positions");
    let sd = (0.9f64 * 0.1 / n).sqrt();
    assert!((frac - 0.9).abs() < 4.0 * sd, "{frac}");
    ok(p, &["corrupt", "--t", "100", "--out", "c2.jsonl"]);
    assert_eq!(
        fs::read(p.join("c1.jsonl")).unwrap(),
        fs::read(p.join("c2.jsonl")).unwrap()
    );
}

#[test]
fn mask_in_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["make-codebook"]);
    fs::write(
        p.join("dataset.jsonl"),
        "{\"condition\":1,\"tokens\":[0,32,1]}\n",
    )
    .unwrap();
    let r = run(p, &["corrupt", "--t", "3"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.starts_with("error kind=domain code=3"));
    assert_eq!(r.stderr.trim_end().lines().count(), 1);
}

#[test]
fn exit_codes_for_config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(
        run(p, &["make-codebook", "--set", "codebook.bogus=1"]).code,
        1
    );
    assert_eq!(
        run(p, &["make-codebook", "--set", "schedule.gamma_max=2"]).code,
        1
    );
    fs::write(p.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(run(p, &["make-codebook", "--config", "bad.toml"]).code, 1);
    assert_eq!(
        run(p, &["make-codebook", "--config", "missing.toml"]).code,
        1
    );
    assert_eq!(run(p, &["frobnicate"]).code, 1);
    let missing = run(p, &["make-dataset"]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.starts_with("error kind=io code=2"));
    assert_eq!(run(p, &["--help"]).code, 0);
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["make-codebook"]);
    fs::write(p.join("run.toml"), "[dataset]\nper_condition = 4\n").unwrap();
    ok(p, &["make-dataset", "--config", "run.toml"]);
    assert_eq!(jsonl(&p.join("dataset.jsonl")).len(), 8);
    let env = [("MOTIONDIFF_DATASET_PER_CONDITION", "3")];
    assert_eq!(
        run_env(p, &["make-dataset", "--config", "run.toml"], &env).code,
        0
    );
    assert_eq!(jsonl(&p.join("dataset.jsonl")).len(), 6);
    let r = run_env(
        p,
        &[
            "make-dataset",
            "--config",
            "run.toml",
            "--set",
            "dataset.per_condition=2",
        ],
        &env,
    );
    assert_eq!(r.code, 0);
    assert_eq!(jsonl(&p.join("dataset.jsonl")).len(), 4);
}

#[test]
fn generate_multi_then_evaluate() {
    let dir = with_dataset();
    let p = dir.path();
    let quick = ["--set", "train.epochs=3"];
    ok(p, &["train", quick[0], quick[1]]);
    let out = ok(p, &["generate-multi"]);
    assert!(out.contains("token_boundaries=12,24,36"), "{out}");
    let tokens = jsonl(&p.join("tokens.jsonl"));
    assert_eq!(tokens.len(), 1);
    assert_eq!(tokens[0]["boundaries"].as_array().unwrap().len(), 3);
    assert_eq!(tokens[0]["states"].as_array().unwrap().len(), 48);
    ok(p, &["evaluate"]);
    let report = jsonl(&p.join("report.jsonl"));
    let windows: Vec<&Value> = report
        .iter()
        .filter(|r| r["metric"] == "jerk_transition")
        .collect();
    assert_eq!(windows.len(), 3);
    assert_eq!(windows[0]["window"], serde_json::json!([28, 68]));
    assert!(report
        .iter()
        .any(|r| r["metric"] == "jerk_transition.summary"));
    let profile = fs::read_to_string(p.join("report.jsonl.profile.txt")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 1 + 192);
}

#[test]
fn generate_single_samples() {
    let dir = with_dataset();
    let p = dir.path();
    ok(p, &["train", "--set", "train.epochs=2"]);
    ok(
        p,
        &[
            "generate",
            "--set",
            "sampler.samples=3",
            "--set",
            "sampler.length=8",
        ],
    );
    let tokens = jsonl(&p.join("tokens.jsonl"));
    assert_eq!(tokens.len(), 3);
    assert!(tokens
        .iter()
        .all(|t| t["states"].as_array().unwrap().len() == 8));
    let out = ok(p, &["evaluate"]);
    assert!(out.contains("jerk_clip"));
    assert!(out.contains("diversity"));
    let report = jsonl(&p.join("report.jsonl"));
    assert!(report.iter().all(|r| r["metric"] != "jerk_transition"));
}

#[test]
fn model_config_mismatch_is_config_error() {
    let dir = with_dataset();
    let p = dir.path();
    ok(p, &["train", "--set", "train.epochs=1"]);
    let r = run(
        p,
        &[
            "generate",
            "--set",
            "schedule.steps=50",
            "--set",
            "sampler.independent_start=40",
        ],
    );
    assert_eq!(r.code, 1, "{}", r.stderr);
}

#[test]
fn matrix_audit_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["make-codebook"]);
    let table = ok(p, &["matrix-audit"]);
    assert_eq!(table.lines().count(), 101);
    let multi = ok(p, &["matrix-audit", "--multi"]);
    assert_ne!(table, multi);
    ok(p, &["matrix-audit", "--out", "audit.txt"]);
    assert_eq!(fs::read_to_string(p.join("audit.txt")).unwrap(), table);
    assert!(p.join("audit.txt.manifest.json").exists());
}
