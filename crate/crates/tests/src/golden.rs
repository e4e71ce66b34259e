//! Comparison of the evaluator against golden reference outputs.

use std::path::{Path, PathBuf};

use masort::metrics::{aggregate, evaluate, Aggregation, MetricsReport, DEFAULT_IOU_THRESH};
use masort::mot_io::{read_ground_truth, read_results};
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/metrics")
}

pub fn load(name: &str) -> MetricsReport {
    let d = fixture_dir().join(name);
    let gt = read_ground_truth(d.join("gt.txt")).unwrap();
    let pred = read_results(d.join("pred.txt")).unwrap();
    evaluate(&gt, &pred, DEFAULT_IOU_THRESH).unwrap()
}

fn mismatches(name: &str, r: &MetricsReport, want: &Value, tol: f64) -> Vec<String> {
    let s = r.summary();
    let mut bad = Vec::new();
    let mut check = |field: &str, got: f64| {
        let w = want[field].as_f64().unwrap();
        if (got - w).abs() > tol {
            bad.push(format!("{name}.{field}: {got} vs {w}"));
        }
    };
    check("HOTA", s.hota);
    check("DetA", s.deta);
    check("AssA", s.assa);
    check("MOTA", s.mota);
    check("IDF1", s.idf1);
    check("TP", s.tp as f64);
    check("FP", s.fp as f64);
    check("FN", s.fn_ as f64);
    check("IDSW", s.idsw as f64);
    for (a, row) in r.hota.per_alpha.iter().enumerate() {
        check_alpha(&mut bad, name, "HOTA_alpha", a, row.hota, want, tol);
        check_alpha(&mut bad, name, "DetA_alpha", a, row.deta, want, tol);
        check_alpha(&mut bad, name, "AssA_alpha", a, row.assa, want, tol);
    }
    bad
}

fn check_alpha(bad: &mut Vec<String>, name: &str, field: &str, a: usize, got: f64, want: &Value, tol: f64) {
    let w = want[field][a].as_f64().unwrap();
    if (got - w).abs() > tol {
        bad.push(format!("{name}.{field}[{a}]: {got} vs {w}"));
    }
}

/// Every fixture plus the pooled combination; returns (checked, mismatches).
pub fn compare_all(tol: f64) -> (usize, Vec<String>) {
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(fixture_dir().join("golden.json")).unwrap()).unwrap();
    let mut names: Vec<&String> = golden.as_object().unwrap().keys().filter(|k| !k.starts_with('_')).collect();
    names.sort();
    let mut bad = Vec::new();
    let mut reports = Vec::new();
    for name in &names {
        let r = load(name);
        bad.extend(mismatches(name, &r, &golden[name.as_str()], tol));
        reports.push(r);
    }
    let pooled = aggregate(&reports, Aggregation::Pooled).unwrap();
    bad.extend(mismatches("_pooled", &pooled, &golden["_pooled"], tol));
    (names.len() + 1, bad)
}
