use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn camlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camlab"))
        .current_dir(dir)
        .env("CAMLAB_DATA_DIR", dir)
        .args(args)
        .output()
        .expect("run camlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn gen_small(dir: &Path) {
    ok(camlab(dir, &["gen", "--family", "cauctions", "--count", "3", "--seed", "2"]));
}

#[test]
fn verify_generated_instances_reports_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(camlab(dir.path(), &["verify", "--generate", "50", "--shifts", "3", "--tol", "1e-6"]));
    assert!(stdout(&o).contains("150/150 pass"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(camlab(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(camlab(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(camlab(dir.path(), &["gen"]).status.code(), Some(2));
    assert_eq!(camlab(dir.path(), &["gen", "--family", "knapsack"]).status.code(), Some(2));
    assert_eq!(camlab(dir.path(), &["collect", "--instances", "missing"]).status.code(), Some(2));
    gen_small(dir.path());
    let o = camlab(dir.path(), &["eval", "--instances", "instances", "--policies", "fsb,bogus"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.cfg"), "lambda1 = -1\n").unwrap();
    let o = camlab(dir.path(), &["train", "--config", "bad.cfg", "--samples", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(camlab(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_dir_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_camlab"))
        .current_dir(dir.path())
        .env_remove("CAMLAB_DATA_DIR")
        .args(["collect"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CAMLAB_DATA_DIR"));
}

#[test]
fn verification_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("bad")).unwrap();
    // x ≥ 2 with x ≤ 1: the relaxation is infeasible, so no pair can pass
    std::fs::write(
        dir.path().join("bad/infeasible.json"),
        r#"{"n_vars":1,"n_cons":1,"objective":[1.0],"rhs":[-2.0],"lower":[0.0],"upper":[1.0],
            "integer_mask":[true],"matrix":[[0,0,-1.0]],"objective_constant":0.0,"label":"infeasible"}"#,
    )
    .unwrap();
    let o = camlab(dir.path(), &["verify", "--instances", "bad", "--shifts", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("0/1 pass"));
}

#[test]
fn augment_with_zero_partners_copies_input() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    ok(camlab(dir.path(), &["collect", "--cap", "3"]));
    ok(camlab(dir.path(), &["augment", "--k", "0"]));
    let a = std::fs::read(dir.path().join("samples.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("augmented.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.path().join("augmented.jsonl.manifest.json").exists());

    ok(camlab(dir.path(), &["augment", "--k", "2", "--out", "aug2.jsonl"]));
    let text = std::fs::read_to_string(dir.path().join("aug2.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3 * String::from_utf8(a).unwrap().lines().count());
    // an augmented file cannot be augmented again
    let o = camlab(dir.path(), &["augment", "--samples", "aug2.jsonl", "--out", "aug3.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_records_inputs_and_schemas() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    ok(camlab(dir.path(), &["collect", "--cap", "2", "--out", "s.jsonl"]));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "collect");
    assert_eq!(m["config"]["cap"], "2");
    assert_eq!(m["schema_versions"]["samples"], camlab::encoder::SCHEMA);
    assert_eq!(m["schema_versions"]["instance"], camlab::milp::INSTANCE_SCHEMA);
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 3);
    for inp in inputs {
        let bytes = std::fs::read(dir.path().join(inp["path"].as_str().unwrap())).unwrap();
        assert_eq!(inp["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let gm = std::fs::read_to_string(dir.path().join("instances/manifest.json")).unwrap();
    assert!(gm.contains("\"gen\""));
}

#[test]
fn manifest_is_written_before_work_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("broken")).unwrap();
    std::fs::write(dir.path().join("broken/x.json"), "{ not json").unwrap();
    let o = camlab(dir.path(), &["collect", "--instances", "broken", "--out", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("s.jsonl.manifest.json").exists());
    assert!(!dir.path().join("s.jsonl").exists());
}

#[test]
fn single_policy_eval_omits_wins() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    ok(camlab(dir.path(), &["eval", "--instances", "instances", "--policies", "mostfrac", "--out", "m.csv"]));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("policy,level,sgm_time_s,sgm_nodes,solved"));
    assert!(lines.next().unwrap().starts_with("mostfrac,desk,"));

    ok(camlab(dir.path(), &["eval", "--instances", "instances", "--policies", "fsb,random", "--out", "m2.csv"]));
    let csv = std::fs::read_to_string(dir.path().join("m2.csv")).unwrap();
    assert!(csv.starts_with("policy,level,sgm_time_s,sgm_nodes,wins,solved\nfsb,"));
}

#[test]
fn jobs_do_not_change_deterministic_results() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let args = ["eval", "--instances", "instances", "--policies", "fsb,pseudocost"];
    ok(camlab(dir.path(), &[&args[..], &["--out", "a.csv"]].concat()));
    ok(camlab(dir.path(), &[&args[..], &["--out", "b.csv", "--jobs", "4"]].concat()));
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
    let m = std::fs::read_to_string(dir.path().join("b.csv.manifest.json")).unwrap();
    assert!(m.contains("\"jobs\": \"1\""));
}

#[test]
fn train_then_eval_learned_policy() {
    let dir = tempfile::tempdir().unwrap();
    ok(camlab(dir.path(), &["gen", "--family", "setcover", "--count", "4", "--seed", "1"]));
    ok(camlab(dir.path(), &["collect", "--cap", "4"]));
    ok(camlab(dir.path(), &["augment", "--k", "1"]));
    std::fs::write(dir.path().join("t.cfg"), "max_epochs = 2\nhidden = 8\n").unwrap();
    let o = ok(camlab(dir.path(), &["train", "--config", "t.cfg"]));
    assert!(stdout(&o).contains("partners"));
    let hist = std::fs::read_to_string(dir.path().join("model/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);
    ok(camlab(
        dir.path(),
        &["eval", "--instances", "instances", "--policies", "learned", "--samples", "samples.jsonl", "--out", "e.csv"],
    ));
    let topk = std::fs::read_to_string(dir.path().join("e.topk.csv")).unwrap();
    assert!(topk.starts_with("k,accuracy\n1,"));
}
