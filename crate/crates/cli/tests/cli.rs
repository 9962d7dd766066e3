use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cwp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwp"))
        .args(args)
        .output()
        .expect("cwp runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cwp-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const SMALL_SAMPLE: &[&str] = &[
    "sample",
    "--set",
    "n=60",
    "--set",
    "mc.chains=4",
    "--set",
    "mc.samples_per_chain=50",
    "--set",
    "mc.burn_in=20",
    "--format",
    "csv",
];

#[test]
fn empty_phase_grid_is_an_empty_report() {
    let doc = stdout_json(&cwp(&["phase-report", "--set", "beta.points=0"]));
    assert_eq!(doc["report"]["points"].as_array().unwrap().len(), 0);
}

#[test]
fn phase_sweep_crosses_the_first_order_transition() {
    let doc = stdout_json(&cwp(&[
        "phase-report",
        "--set",
        r#"beta={"min":2.0,"max":3.2,"points":7}"#,
    ]));
    let tags: Vec<&str> = doc["report"]["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["tag"].as_str().unwrap())
        .collect();
    assert_eq!(tags.first(), Some(&"UniqueMinimizer"));
    assert_eq!(tags.last(), Some(&"LowTempQFold"));
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(cwp(&["clt-rate", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(cwp(&["clt-rate", "--set", "mc.bogus=1"]).status.code(), Some(2));
    assert_eq!(cwp(&["exact-law", "--set", "q=1"]).status.code(), Some(2));
    assert_eq!(cwp(&["exact-law", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(cwp(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        cwp(&["phase-report", "--config", "/nonexistent/config.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn clt_rate_single_n_has_no_fit() {
    let doc = stdout_json(&cwp(&["clt-rate", "--set", "ns=[40]", "--set", "quadrant_points=11"]));
    assert_eq!(doc["report"]["rows"].as_array().unwrap().len(), 1);
    assert!(doc["report"]["marginal_fit"].is_null());
}

#[test]
fn hs_check_is_exact_at_n_1() {
    let doc = stdout_json(&cwp(&["hs-check", "--set", "n=1"]));
    assert!(doc["report"]["gap"]["tv"].as_f64().unwrap() < 1e-10);
}

#[test]
fn exact_law_csv_sums_to_one() {
    let out = cwp(&["exact-law", "--set", "n=12", "--format", "csv"]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let total: f64 = reader
        .records()
        .map(|r| r.unwrap()[3].parse::<f64>().unwrap().exp())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn manifest_references_the_artifact() {
    let dir = scratch("manifest");
    let out = cwp(&[
        "critical-rate",
        "--set",
        "ns=[16,64]",
        "--set",
        "v_n=null",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json_file(&dir.join("critical-rate.manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["subcommand"], "critical-rate");
    assert_eq!(manifest["outputs"], serde_json::json!(["critical-rate.json"]));
    // Defaults are echoed in full.
    assert_eq!(manifest["config"]["q"], 3);
    assert_eq!(manifest["config"]["mc"]["chains"], 8);
    let artifact = json_file(&dir.join("critical-rate.json"));
    assert_eq!(artifact["manifest"], "critical-rate.manifest.json");
    assert_eq!(artifact["report"]["rows"].as_array().unwrap().len(), 2);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn csv_artifacts_start_with_the_manifest_reference() {
    let dir = scratch("csv");
    let mut args = SMALL_SAMPLE.to_vec();
    args.extend(["--out", dir.to_str().unwrap()]);
    assert!(cwp(&args).status.success());
    let text = fs::read_to_string(dir.join("sample.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# manifest: sample.manifest.json"));
    assert_eq!(lines.next(), Some("chain,sweep,W_1,W_2,W_3"));
    assert_eq!(lines.count(), 200);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn rerunning_from_a_manifest_reproduces_the_artifact() {
    let first = scratch("rerun-a");
    let second = scratch("rerun-b");
    let mut args = SMALL_SAMPLE.to_vec();
    args.extend(["--seed", "11", "--out", first.to_str().unwrap()]);
    assert!(cwp(&args).status.success());
    let manifest = first.join("sample.manifest.json");
    assert_eq!(json_file(&manifest)["seed"], 11);
    let out = cwp(&[
        "sample",
        "--config",
        manifest.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(first.join("sample.csv")).unwrap(),
        fs::read(second.join("sample.csv")).unwrap()
    );
    // A manifest from another subcommand is refused.
    assert_eq!(
        cwp(&["clt-rate", "--config", manifest.to_str().unwrap()]).status.code(),
        Some(2)
    );
    fs::remove_dir_all(first).unwrap();
    fs::remove_dir_all(second).unwrap();
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let mut runs = Vec::new();
    for threads in ["1", "3"] {
        let mut args = SMALL_SAMPLE.to_vec();
        args.extend(["--seed", "5", "--threads", threads]);
        let out = cwp(&args);
        assert!(out.status.success());
        runs.push(out.stdout);
    }
    assert_eq!(runs[0], runs[1]);

    let stein = |threads: &str| {
        cwp(&[
            "stein-bounds",
            "--set",
            "ns=[24,48]",
            "--set",
            "residual_ns=[16,32]",
            "--set",
            "mc.samples_per_chain=150",
            "--set",
            "mc.thinning=2",
            "--threads",
            threads,
        ])
        .stdout
    };
    let one = stein("1");
    assert!(!one.is_empty());
    assert_eq!(one, stein("4"));
}

#[test]
fn print_config_shows_defaults() {
    let out = cwp(&["stein-bounds", "--print-config", "--seed", "2"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["mc"]["seed"], 2);
    assert_eq!(doc["ns"], serde_json::json!([64, 128, 256]));
}
