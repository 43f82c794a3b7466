//! End-to-end runs of the `qbc` binary.

use serde_json::Value;
use std::process::{Command, Output};

fn qbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line is one JSON record"))
        .collect()
}

#[test]
fn fidelity_record_has_the_stable_schema() {
    let out = qbc(&["fidelity", "--channel", "builtin:identity", "--r1", "2", "--r2", "1", "--class", "ns-ppt"]);
    assert!(out.status.success());
    let recs = records(&out);
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    for key in ["command", "channel", "parameters", "results", "diagnostics", "version", "seed"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["command"], "fidelity");
    assert_eq!(r["diagnostics"]["status"], "Optimal");
    let f = r["results"]["fidelity"].as_f64().unwrap();
    assert!((f - 1.0).abs() <= 1e-6);
}

#[test]
fn floats_print_with_seventeen_significant_digits() {
    let out = qbc(&["curve", "--q-gamma", "1", "--n-max", "10", "--r1-bits", "0.75", "--r2-bits", "0.75"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("9.6875000000000000e-1"), "{text}");
}

#[test]
fn json_channel_files_are_accepted() {
    let path = std::env::temp_dir().join(format!("qbc-cli-test-{}.json", std::process::id()));
    let spec = r#"{"name":"bit flip","dims":{"A":2,"B":2,"C":1},
        "kraus":[[[[0.8944271909999159,0],[0,0]],[[0,0],[0.8944271909999159,0]]],
                 [[[0,0],[0.4472135954999579,0]],[[0.4472135954999579,0],[0,0]]]]}"#;
    std::fs::write(&path, spec).unwrap();
    let out = qbc(&["gamma", "--channel", path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = records(&out)[0]["results"]["gamma"].as_f64().unwrap();
    assert!(g > 1.0 && g < 2.0, "{g}");
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let a = qbc(&["verify", "--suite", "oracle", "--seed", "11"]);
    let b = qbc(&["verify", "--suite", "oracle", "--seed", "11"]);
    assert!(a.status.success());
    let ra = records(&a);
    let rb = records(&b);
    assert_eq!(ra[0]["results"], rb[0]["results"]);
    assert_eq!(ra[0]["results"]["passed"], true);
}

#[test]
fn csv_flag_prints_a_table() {
    let out = qbc(&["--csv", "curve", "--q-gamma", "1", "--n-max", "3", "--r1-bits", "1", "--r2-bits", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rows.records().count(), 3);
}

#[test]
fn bad_input_exits_with_two_and_explains_on_stderr() {
    let out = qbc(&["fidelity", "--channel", "builtin:nope", "--r1", "2", "--r2", "1", "--class", "ns"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown builtin"));
    let out = qbc(&["fidelity", "--r1", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
