use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FIXTURE: &str = "qubits 4\ncx 0 1\ncx 1 2\ncx 0 2\ncx 2 1\ncx 0 2\ncx 2 3\n";

const THREE_NODES: &str = r#"
clusters = [[0, 1, 2]]
nodes = { data_qubits = 4, comm_qubits = 1 }
channels = [
    { a = 0, b = 1, fidelity = 0.98 },
    { a = 0, b = 2, fidelity = 0.98 },
    { a = 1, b = 2, fidelity = 0.98 },
]
"#;

fn qdcc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdcc")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn epr(r: &Value) -> u64 {
    r["metrics"]["n_iep"].as_u64().unwrap() + r["metrics"]["n_oep"].as_u64().unwrap()
}

#[test]
fn csp100_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = qdcc(&["gen", "csp", "--n", "100", "--seed", "0", "-o", "csp100.qc"], dir.path());
    assert!(g.status.success());
    let r = json(&qdcc(&["compile", "csp100.qc", "--default-model", "--compare-baseline"], dir.path()));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(epr(&r), 2);
    assert_eq!(r["metrics"]["n_oep"], 0);
    assert_eq!(r["metrics"]["nodes"], 3);
    assert!(r["baseline"].is_object());
    assert!(r["comparison"]["epr_dec"].is_number());
}

#[test]
fn report_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    qdcc(&["gen", "qaoa", "--n", "30", "--seed", "5", "-o", "q.qc"], dir.path());
    let args = ["compile", "q.qc", "--default-model", "--anneal-iters", "4", "--seed", "3", "--compare-baseline"];
    let a = qdcc(&args, dir.path());
    let b = qdcc(&args, dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn fixture_under_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("example.qc"), FIXTURE).unwrap();
    fs::write(dir.path().join("three.toml"), THREE_NODES).unwrap();
    let run = |p: &str| {
        json(&qdcc(
            &["compile", "example.qc", "--model", "three.toml", "--placement", "0,1,2,2", "--pipeline", p],
            dir.path(),
        ))
    };
    assert_eq!(epr(&run("baseline")), 5);
    assert_eq!(epr(&run("collcomm")), 2);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.qc"), "qubits 2\nfrobnicate 0 1\n").unwrap();
    let parse = qdcc(&["compile", "bad.qc", "--default-model"], dir.path());
    assert_eq!(parse.status.code(), Some(3));

    qdcc(&["gen", "csp", "--n", "400", "-o", "big.qc"], dir.path());
    let cap = qdcc(&["compile", "big.qc", "--default-model"], dir.path());
    assert_eq!(cap.status.code(), Some(4));

    fs::write(dir.path().join("m.toml"), "clusters = 3\n").unwrap();
    let cfg = qdcc(&["compile", "big.qc", "--model", "m.toml"], dir.path());
    assert_eq!(cfg.status.code(), Some(6));

    let missing = qdcc(&["compile", "nope.qc", "--default-model"], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let usage = qdcc(&["compile"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn verify_small_circuits() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("three.toml"), THREE_NODES).unwrap();
    for fam in ["mctr", "rca", "qft"] {
        let file = format!("{fam}.qc");
        qdcc(&["gen", fam, "--n", "5", "--seed", "1", "-o", &file], dir.path());
        for p in ["collcomm", "baseline"] {
            let r = json(&qdcc(&["verify", &file, "--model", "three.toml", "--pipeline", p], dir.path()));
            assert_eq!(r["equivalent"], true, "{fam} {p}: {r}");
        }
    }
}

#[test]
fn anneal_log_is_written() {
    let dir = tempfile::tempdir().unwrap();
    qdcc(&["gen", "rca", "--n", "20", "-o", "r.qc"], dir.path());
    let out = qdcc(
        &["compile", "r.qc", "--default-model", "--anneal-iters", "3", "--anneal-log", "log.csv", "-o", "r.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(log.starts_with("iteration,energy,best,accepted\n"));
    assert_eq!(log.lines().count(), 1 + 2 * 3);
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["options"]["anneal"]["iters"], 3);
}

#[test]
fn bench_suite_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdcc(&["bench-suite", "--default-model", "--sizes", "20", "--families", "csp,bv"], dir.path());
    let r = json(&out);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["family"], "csp");
    assert!(rows[1]["baseline"]["epr"].is_number());
    let t = qdcc(&["bench-suite", "--sizes", "20", "--families", "csp", "--table"], dir.path());
    let text = String::from_utf8(t.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("name"));
}
