//! End-to-end runs of the binary against frozen outputs.

mod common;

use common::{case, check_golden, run, Files};
use serde_json::Value;

fn golden(name: &str) -> Files {
    check_golden(case(name)).unwrap_or_else(|e| panic!("{e}"))
}

fn json(files: &Files, f: &str) -> Value {
    serde_json::from_slice(&files[f]).expect("json output")
}

fn assert_envelope(v: &Value, seed: u64) {
    assert_eq!(v["tool_version"], "morse-pi1 0.1.0");
    let h = v["scenario_hash"].as_str().expect("hash");
    assert_eq!(h.len(), 64);
    assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(v["seed"], seed);
}

#[test]
fn analyze_torus() {
    let f = golden("analyze_torus");
    let pi1 = json(&f, "pi1.json");
    assert_envelope(&pi1, 0);
    assert_eq!(pi1["summary"], "Z^2");
    assert!(f.contains_key("plot.svg"));
    let svg = String::from_utf8(f["plot.svg"].clone()).expect("utf8");
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
}

#[test]
fn analyze_sphere() {
    let f = golden("analyze_sphere");
    assert_eq!(json(&f, "pi1.json")["summary"], "0");
}

#[test]
fn analyze_degenerate_fails() {
    let f = golden("analyze_degenerate");
    let e = json(&f, "error.json");
    assert_eq!(e["error"]["kind"], "DegenerateCritical");
    assert_envelope(&e, 0);
}

#[test]
fn analyze_from_json_matches_numeric() {
    let f = golden("analyze_from_json");
    assert_eq!(json(&f, "pi1.json")["summary"], "Z^2");
}

#[test]
fn strict_smale_passes_on_generic_torus() {
    let d = tempfile::tempdir().expect("tempdir");
    assert_eq!(run(&["analyze", "--config", "scenarios/torus.json", "--strict-smale"], d.path()), 0);
}

#[test]
fn seed_override_lands_in_envelope() {
    let d = tempfile::tempdir().expect("tempdir");
    assert_eq!(run(&["analyze", "--config", "scenarios/torus.json", "--seed", "42"], d.path()), 0);
    let v: Value = serde_json::from_slice(&std::fs::read(d.path().join("complex.json")).unwrap()).unwrap();
    assert_envelope(&v, 42);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().expect("tempdir");
    assert_eq!(run(&["analyze"], d.path()), 1);
    let v: Value = serde_json::from_slice(&std::fs::read(d.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "Usage");
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema":"scenario/v1","name":"x","typo":1}"#).unwrap();
    assert_eq!(run(&["analyze", "--config", bad.to_str().unwrap()], d.path()), 1);
    // a scenario without the section the command needs
    assert_eq!(run(&["graft", "--config", "scenarios/torus.json"], d.path()), 1);
}

#[test]
fn continue_identity() {
    let f = golden("continue_identity");
    let r = json(&f, "stepmap.json");
    assert_envelope(&r, 0);
    assert_eq!(r["det"], 1);
}

#[test]
fn continue_from_json_matches_numeric() {
    let numeric = golden("continue_identity");
    let f = golden("continue_from_json");
    let (a, b) = (json(&f, "stepmap.json"), json(&numeric, "stepmap.json"));
    for k in ["map", "abelianized", "quotient", "verdicts"] {
        assert_eq!(a[k], b[k], "{k}");
    }
}

#[test]
fn graft_shear() {
    let f = golden("graft_shear");
    let r = json(&f, "graft.json");
    assert_envelope(&r, 11);
    assert_eq!(r["abelianized"], serde_json::json!([[1, 0], [1, 1]]));
}

#[test]
fn square_constant() {
    let f = golden("square_constant");
    assert_eq!(json(&f, "sweep.json")["verdict"]["verdict"], "commutes");
}

#[test]
fn relative_cap() {
    let f = golden("relative_cap");
    assert_eq!(json(&f, "relpi1.json")["labels"], serde_json::json!(["1", "σ0@p1"]));
}

#[test]
fn relative_max_min_at_neg_inf() {
    let f = golden("relative_max_min_neg");
    assert_eq!(json(&f, "relpi1.json")["labels"].as_array().unwrap().len(), 1);
}

#[test]
fn relative_max_min_from_json() {
    let numeric = tempfile::tempdir().expect("tempdir");
    assert_eq!(run(&["relative", "--config", "scenarios/relative_max_min_slab.json"], numeric.path()), 0);
    let f = golden("relative_max_min_from_json");
    let a = json(&f, "relpi1.json");
    let b: Value = serde_json::from_slice(&std::fs::read(numeric.path().join("relpi1.json")).unwrap()).unwrap();
    assert_eq!(a["labels"].as_array().unwrap().len(), 314);
    assert_eq!(a["labels"], b["labels"]);
}
