//! End-to-end runs of the `bernpois` binary: exit codes, report shape and
//! schema validity.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bernpois_cli::sweep::csv_header;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bernpois"));
    c.env_remove(bernpois_cli::THREADS_ENV);
    c
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/schema/report.schema.json"
    ))
    .unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(doc: &serde_json::Value) {
    let v = schema();
    let errors: Vec<String> = v
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

const REFERENCE: &str = r#"{"p_spec": {"explicit": [0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1]}, "z_values": [0,1,2], "seed": 42}"#;

#[test]
fn bounds_reference_config_writes_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), REFERENCE);
    let out = dir.path().join("report.csv");
    let o = run(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, csv_header());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let ok = header.iter().position(|h| h == "sandwich_ok").unwrap();
    assert!(rows.iter().all(|r| &r[ok] == "true"));
}

#[test]
fn empty_z_values_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p_spec": {"explicit": [0.1]}, "z_values": []}"#,
    );
    let o = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("z_values"));
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "{\n  \"p_spec\": {\"explicit\": [0.1]},\n  \"z_values\": [0,]\n}",
    );
    let o = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bad_flags_are_config_errors() {
    assert_eq!(code(&run(&["bounds", "--format", "xml"])), 1);
    assert_eq!(code(&run(&["bounds"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), REFERENCE);
    let out = dir.path().join("missing").join("report.csv");
    let o = run(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    assert_eq!(
        code(&run(&["bounds", "--config", "/nonexistent/bernpois.json"])),
        2
    );
}

#[test]
fn side_condition_flags_do_not_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p_spec": {"generator": {"n": 10, "distribution": {"kind": "constant", "c": 0.5}}}, "z_values": [0], "output_format": "json"}"#,
    );
    let o = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid(&doc);
    let bounds = doc["rows"][0]["bounds"].as_array().unwrap();
    for name in ["nc1", "nc2"] {
        let b = bounds.iter().find(|b| b["name"] == name).unwrap();
        assert_eq!(b["applicable"], false);
    }
}

#[test]
fn simulate_json_validates_and_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p_spec": {"explicit": [0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1]}, "z_values": [1]}"#,
    );
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--samples",
        "1000000",
        "--seed",
        "42",
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid(&doc);
    assert_eq!(doc["rows"][0]["mc_agreement"], true);
    assert_eq!(doc["mc_samples"], 1_000_000);
}

#[test]
fn simulate_is_reproducible_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p_spec": {"generator": {"instances": 4, "n": 12, "n_min": 2, "distribution": {"kind": "mixed"}}}, "z_values": [0, 1, 2], "mc_samples": 50000, "seed": 9}"#,
    );
    let go = |threads: &str| {
        let o = bin()
            .args(["simulate", "--config", cfg.to_str().unwrap()])
            .env(bernpois_cli::THREADS_ENV, threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        o.stdout
    };
    let a = go("1");
    assert_eq!(a, go("1"));
    assert_eq!(a, go("8"));
}

#[test]
fn verify_default_passes_and_validates() {
    let o = run(&["verify", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid(&doc);
    assert_eq!(doc["instances"], 200);
    assert_eq!(doc["ok"], true);
}

#[test]
fn verify_boundary_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p_spec": {"generator": {"instances": 60, "n": 50, "n_min": 1, "distribution": {"kind": "scaled_sum_sq", "target": 1.0}}}, "z_values": [0,1,2,3,4,5,6,7,8,9,10]}"#,
    );
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_bound_exits_3_and_names_the_invariant() {
    let o = run(&["verify", "--debug-corrupt-bound", "nc1"]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nc1_upper"), "{err}");
    assert_eq!(
        code(&run(&["verify", "--debug-corrupt-bound", "thm1_large"])),
        1
    );
}
