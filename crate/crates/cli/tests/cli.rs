//! Process-level tests of the command-line interface: exit codes, report
//! determinism, and malformed-input handling.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cstarmod"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cstarmod-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn strip_wall_time(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.contains("wall_ms") && !l.starts_with("result:"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_reconstruct_passes_with_exit_zero() {
    let inst = tmp("inst.json");
    let out = bin()
        .args(["gen", "imprimitivity", "--points", "5", "--seed", "9"])
        .args(["--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["reconstruct", "--in", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("result:  PASS"));
}

#[test]
fn check_failure_gives_exit_one() {
    // A non-imprimitivity instance: one fiber of dimension two.
    let inst = tmp("fat.json");
    std::fs::write(
        &inst,
        r#"{
            "left": {"type": "diagonal", "labels": ["x", "y"]},
            "right": {"type": "diagonal", "labels": ["u", "v"]},
            "fibers": [
                {"a": 0, "b": 0, "dim": 2},
                {"a": 1, "b": 1, "dim": 1}
            ]
        }"#,
    )
    .unwrap();
    let out = bin().args(["imprimitivity", "--in", inst.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL"));
}

#[test]
fn malformed_input_gives_exit_two() {
    let inst = tmp("broken.json");
    std::fs::write(&inst, "{ this is not json").unwrap();
    let out = bin().args(["validate", "--in", inst.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "parse error should name a location: {err}");

    let missing = tmp("does-not-exist.json");
    let out = bin().args(["phi", "--in", missing.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Ragged matrix: parses as JSON but fails realization.
    let inst = tmp("ragged.json");
    std::fs::write(
        &inst,
        r#"{
            "dim": 2,
            "left_idem": [[[ [1.0,0.0], [0.0,0.0] ], [ [0.0,0.0] ]]],
            "right_idem": [],
            "right_gram": [],
            "left_gram": []
        }"#,
    )
    .unwrap();
    let out = bin().args(["decompose", "--in", inst.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn injected_idempotent_defect_is_reported() {
    // Generate a presented instance, perturb one idempotent entry, and
    // expect `validate` to fail with the residual named.
    let inst = tmp("present.json");
    let out = bin()
        .args(["gen", "imprimitivity", "--points", "3", "--seed", "4", "--present"])
        .args(["--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&inst).unwrap()).unwrap();
    doc["left_idem"][0][0][0][0] = serde_json::json!(
        doc["left_idem"][0][0][0][0].as_f64().unwrap() + 1e-3
    );
    let broken = tmp("present-broken.json");
    std::fs::write(&broken, serde_json::to_string(&doc).unwrap()).unwrap();

    let out = bin().args(["validate", "--in", broken.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("left_idem_idempotent"));
    assert!(text.contains("FAIL"));
}

#[test]
fn reports_are_deterministic_modulo_wall_time() {
    let inst = tmp("det.json");
    bin()
        .args(["gen", "imprimitivity", "--points", "6", "--seed", "17", "--present"])
        .args(["--out", inst.to_str().unwrap()])
        .output()
        .unwrap();

    let mut digests = std::collections::HashSet::new();
    for _ in 0..10 {
        let out = bin()
            .args(["reconstruct", "--in", inst.to_str().unwrap()])
            .args(["--format", "json", "--seed", "3", "--samples", "20"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        digests.insert(strip_wall_time(&String::from_utf8_lossy(&out.stdout)));
    }
    assert_eq!(digests.len(), 1, "reports differ beyond wall time");
}

#[test]
fn generated_instances_are_seed_deterministic() {
    let run = |seed: &str| {
        let out = bin()
            .args(["gen", "category", "--objects", "3", "--spectrum", "2", "--seed", seed])
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn presented_round_trip_recovers_fiber_dims() {
    let fib = tmp("rt-fibered.json");
    let pres = tmp("rt-present.json");
    bin()
        .args(["gen", "imprimitivity", "--points", "4", "--seed", "8"])
        .args(["--out", fib.to_str().unwrap()])
        .output()
        .unwrap();
    bin()
        .args(["gen", "imprimitivity", "--points", "4", "--seed", "8", "--present"])
        .args(["--out", pres.to_str().unwrap()])
        .output()
        .unwrap();

    let out = bin()
        .args(["decompose", "--in", pres.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let decomposed = &doc["extra"]["result"]["fibers"];
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fib).unwrap()).unwrap();
    // Same support pattern and dimensions as the fibered original.
    let mut got: Vec<(u64, u64, u64)> = decomposed
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["a"].as_u64().unwrap(),
                f["b"].as_u64().unwrap(),
                f["dim"].as_u64().unwrap(),
            )
        })
        .collect();
    let mut want: Vec<(u64, u64, u64)> = original["fibers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["a"].as_u64().unwrap(),
                f["b"].as_u64().unwrap(),
                f["dim"].as_u64().unwrap(),
            )
        })
        .collect();
    got.sort_unstable();
    want.sort_unstable();
    assert_eq!(got, want);
}

#[test]
fn tensor_and_quotient_commands() {
    let a = tmp("tensor-a.json");
    bin()
        .args(["gen", "imprimitivity", "--points", "3", "--seed", "2"])
        .args(["--out", a.to_str().unwrap()])
        .output()
        .unwrap();

    // Tensor needs composable algebras: build the second factor from the
    // first one's right algebra by swapping the roles in the JSON.
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let second = serde_json::json!({
        "left": doc["right"],
        "right": {"type": "diagonal", "labels": ["c0", "c1", "c2"]},
        "fibers": [
            {"a": 0, "b": 1, "dim": 1},
            {"a": 1, "b": 2, "dim": 1},
            {"a": 2, "b": 0, "dim": 1}
        ]
    });
    let b = tmp("tensor-b.json");
    std::fs::write(&b, serde_json::to_string(&second).unwrap()).unwrap();

    let out = bin()
        .args(["tensor", "--in", a.to_str().unwrap(), "--in", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let q = tmp("quotient.json");
    let spec = serde_json::json!({ "bimodule": doc, "kept": [0, 2] });
    std::fs::write(&q, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = bin().args(["quotient", "--in", q.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // Improper ideal: parses, fails the check.
    let q2 = tmp("quotient-improper.json");
    let spec = serde_json::json!({ "bimodule": doc, "kept": [] });
    std::fs::write(&q2, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = bin().args(["quotient", "--in", q2.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn category_commands() {
    let cat = tmp("cat.json");
    bin()
        .args(["gen", "category", "--objects", "2", "--spectrum", "3", "--seed", "21"])
        .args(["--out", cat.to_str().unwrap()])
        .output()
        .unwrap();
    for cmd in ["category-check", "cocycle", "picard"] {
        let out = bin().args([cmd, "--in", cat.to_str().unwrap()]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn reconstruct_swap_reports_transposition() {
    let inst = tmp("swap2.json");
    std::fs::write(
        &inst,
        r#"{
            "left": {"type": "diagonal", "labels": ["x", "y"]},
            "right": {"type": "diagonal", "labels": ["u", "v"]},
            "fibers": [
                {"a": 0, "b": 1, "dim": 1},
                {"a": 1, "b": 0, "dim": 1}
            ]
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["reconstruct", "--in", inst.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(doc["extra"]["bijection"], serde_json::json!([1, 0]));
    assert_eq!(doc["pass"], serde_json::json!(true));
}

#[test]
fn phi_of_identity_bimodule_is_identity_with_zero_alpha_residual() {
    let inst = tmp("identity3.json");
    std::fs::write(
        &inst,
        r#"{
            "left": {"type": "diagonal", "labels": ["p", "q", "r"]},
            "right": {"type": "diagonal", "labels": ["p'", "q'", "r'"]},
            "fibers": [
                {"a": 0, "b": 0, "dim": 1},
                {"a": 1, "b": 1, "dim": 1},
                {"a": 2, "b": 2, "dim": 1}
            ]
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["phi", "--in", inst.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(doc["extra"]["spectrum_bijection"], serde_json::json!([0, 1, 2]));
    let alpha = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "alpha_normalization")
        .unwrap();
    assert_eq!(alpha["residual"], serde_json::json!(0.0));
}

#[test]
fn invalid_config_gives_exit_two() {
    let inst = tmp("cfg.json");
    bin()
        .args(["gen", "imprimitivity", "--points", "2", "--seed", "1"])
        .args(["--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    let out = bin()
        .args(["phi", "--in", inst.to_str().unwrap(), "--samples", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["phi", "--in", inst.to_str().unwrap(), "--tol", "-1.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
