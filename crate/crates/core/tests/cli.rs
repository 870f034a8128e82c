use std::path::PathBuf;
use std::process::Command;

use beliefvar::cli::{run, BoundCheckReport, CompareReport, Outcome, ReportFile};
use serde_json::{json, Value};
use tempfile::NamedTempFile;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .display()
        .to_string()
}

fn network_file(value: Value) -> NamedTempFile {
    let file = NamedTempFile::new().unwrap();
    std::fs::write(file.path(), serde_json::to_string_pretty(&value).unwrap()).unwrap();
    file
}

fn beliefvar(args: &[&str]) -> Outcome {
    run(std::iter::once("beliefvar").chain(args.iter().copied()))
}

fn path_of(file: &NamedTempFile) -> &str {
    file.path().to_str().unwrap()
}

fn binary_pair(root: Value, given_a1: Value, given_a2: Value) -> Value {
    json!({"nodes": [
        {"id": "A", "alternatives": ["a1", "a2"], "parent": null, "cpt": [{"given": null, "dist": root}]},
        {"id": "B", "alternatives": ["b1", "b2"], "parent": "A", "cpt": [
            {"given": "a1", "dist": given_a1},
            {"given": "a2", "dist": given_a2}
        ]}
    ]})
}

fn beta(a: f64, b: f64) -> Value {
    json!({"type": "dirichlet", "alpha": [a, b]})
}

fn point(p: [f64; 2]) -> Value {
    json!({"type": "point", "p": p})
}

fn query(args: &[&str]) -> ReportFile {
    let out = beliefvar(args);
    assert_eq!(out.code, 0, "{}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

#[test]
fn validate_accepts_sample_networks() {
    for name in ["two_point.json", "uniform_pair.json", "diagnosis.json"] {
        let out = beliefvar(&["validate", &data(name)]);
        assert_eq!(out.code, 0, "{name}: {}", out.stderr);
    }
}

#[test]
fn zero_alpha_is_rejected() {
    let file = network_file(json!({"nodes": [
        {"id": "A", "alternatives": ["a1", "a2"], "parent": null,
         "cpt": [{"given": null, "dist": {"type": "dirichlet", "alpha": [0.0, 1.0]}}]}
    ]}));
    let out = beliefvar(&["validate", path_of(&file)]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains('A'), "{}", out.stderr);
}

#[test]
fn cycles_are_rejected() {
    let file = network_file(json!({"nodes": [
        {"id": "A", "alternatives": ["a1", "a2"], "parent": "B",
         "cpt": [{"given": "b1", "dist": point([0.5, 0.5])}, {"given": "b2", "dist": point([0.5, 0.5])}]},
        {"id": "B", "alternatives": ["b1", "b2"], "parent": "A",
         "cpt": [{"given": "a1", "dist": point([0.5, 0.5])}, {"given": "a2", "dist": point([0.5, 0.5])}]}
    ]}));
    let out = beliefvar(&["validate", path_of(&file)]);
    assert_eq!(out.code, 2);
    assert!(
        out.stderr.to_lowercase().contains("cycle"),
        "{}",
        out.stderr
    );
}

#[test]
fn uniform_root_has_variance_one_twelfth() {
    let report = query(&["query", &data("uniform_pair.json"), "--nodes", "A"]);
    let a = &report.nodes["A"];
    assert!((a.mean[0] - 0.5).abs() < 1e-15);
    assert!((a.variance[0] - 1.0 / 12.0).abs() < 1e-15);
    assert_eq!(report.nodes.len(), 1);
}

#[test]
fn two_point_child_moments() {
    let report = query(&["query", &data("two_point.json")]);
    let b = &report.nodes["B"];
    assert!((b.mean[0] - 0.48).abs() < 1e-15);
    assert!((b.second[0] - 0.25).abs() < 1e-15);
    assert!((b.variance[0] - 0.0196).abs() < 1e-15);
}

#[test]
fn observed_node_reports_certainty() {
    let report = query(&["query", &data("two_point.json"), "--evidence", "A=a1"]);
    let a = &report.nodes["A"];
    assert_eq!(a.mean, vec![1.0, 0.0]);
    assert_eq!(a.variance, vec![0.0, 0.0]);
    assert_eq!(report.evidence["A"], "a1");
    let b = &report.nodes["B"];
    assert!((b.mean[0] - 0.9).abs() < 1e-15 && b.variance[0].abs() < 1e-15);
}

#[test]
fn unknown_labels_exit_with_invalid_input() {
    let path = data("two_point.json");
    assert_eq!(beliefvar(&["query", &path, "--evidence", "Z=a1"]).code, 2);
    assert_eq!(beliefvar(&["query", &path, "--evidence", "A=a9"]).code, 2);
    assert_eq!(beliefvar(&["query", &path, "--nodes", "A,Z"]).code, 2);
    assert_eq!(beliefvar(&["query", &path, "--evidence", "A"]).code, 2);
}

#[test]
fn impossible_evidence_exits_with_three() {
    let file = network_file(binary_pair(
        point([0.5, 0.5]),
        point([1.0, 0.0]),
        point([1.0, 0.0]),
    ));
    let out = beliefvar(&["query", path_of(&file), "--evidence", "B=b2"]);
    assert_eq!(out.code, 3, "{}", out.stderr);
}

#[test]
fn enumeration_compare_agrees_with_propagation() {
    let out = beliefvar(&["compare", &data("two_point.json"), "--evidence", "B=b1"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: CompareReport = serde_json::from_str(&out.stdout).unwrap();
    assert!(report.pass);
    let d = report.max_abs_diff;
    assert!(
        d.mean <= 1e-10 && d.second <= 1e-10 && d.variance <= 1e-10,
        "{d:?}"
    );
}

#[test]
fn exact_posterior_compare_exposes_the_approximation() {
    let out = beliefvar(&[
        "compare",
        &data("two_point.json"),
        "--evidence",
        "B=b1",
        "--oracle-mode",
        "exact-posterior",
    ]);
    assert_eq!(out.code, 4);
    let report: CompareReport = serde_json::from_str(&out.stdout).unwrap();
    assert!(report.max_abs_diff.mean <= 1e-12);
    assert!(report.max_abs_diff.second > 1e-3);
}

#[test]
fn enumeration_rejects_dirichlet_rows() {
    let out = beliefvar(&["compare", &data("uniform_pair.json")]);
    assert_eq!(out.code, 5);
}

#[test]
fn point_mass_monte_carlo_is_exact() {
    let file = network_file(binary_pair(
        point([0.3, 0.7]),
        point([0.9, 0.1]),
        point([0.2, 0.8]),
    ));
    let out = beliefvar(&[
        "compare",
        path_of(&file),
        "--mode",
        "mc",
        "--samples",
        "1000",
        "--seed",
        "4",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: CompareReport = serde_json::from_str(&out.stdout).unwrap();
    let d = report.max_abs_diff;
    assert!(
        d.mean <= 1e-12 && d.second <= 1e-12 && d.variance <= 1e-12,
        "{d:?}"
    );
}

#[test]
fn monte_carlo_error_shrinks_with_samples() {
    let se_of = |samples: &str| {
        let out = beliefvar(&[
            "compare",
            &data("diagnosis.json"),
            "--mode",
            "mc",
            "--oracle-mode",
            "prior",
            "--samples",
            samples,
            "--seed",
            "12",
        ]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let report: CompareReport = serde_json::from_str(&out.stdout).unwrap();
        report.nodes["Test"].oracle_se.clone().unwrap().variance[0]
    };
    let ratio = se_of("10000") / se_of("90000");
    assert!((2.7..3.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn bound_check_uniform_pair() {
    let out = beliefvar(&["boundcheck", &data("uniform_pair.json")]);
    assert_eq!(out.code, 0);
    let report: BoundCheckReport = serde_json::from_str(&out.stdout).unwrap();
    assert!(report.pass);
    assert!((report.min_slack.unwrap() - 1.0 / 36.0).abs() < 1e-15);
}

#[test]
fn bound_check_reports_excess() {
    let file = network_file(binary_pair(
        beta(1.0, 1.0),
        beta(49.5, 0.5),
        beta(0.5, 49.5),
    ));
    let out = beliefvar(&["boundcheck", path_of(&file)]);
    assert_eq!(out.code, 4);
    let report: BoundCheckReport = serde_json::from_str(&out.stdout).unwrap();
    assert!(!report.pass);
    assert!(report.nodes[0].variance > 0.08);
}

#[test]
fn bound_check_generated_tree() {
    let out = beliefvar(&[
        "boundcheck",
        "--gen",
        "3",
        "--max-nodes",
        "8",
        "--max-depth",
        "3",
    ]);
    let report: BoundCheckReport = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(out.code, if report.pass { 0 } else { 4 });
    assert_eq!(report.seed, Some(3));
    let generated = report.generated.expect("generated network is embedded");
    assert!(generated.nodes.len() <= 8);
    assert_eq!(report.nodes.len(), generated.nodes.len() - 1);
}

#[test]
fn bound_check_needs_binary_beta_networks() {
    assert_eq!(beliefvar(&["boundcheck", &data("diagnosis.json")]).code, 5);
    assert_eq!(beliefvar(&["boundcheck", &data("two_point.json")]).code, 5);
}

#[test]
fn reports_round_trip_exactly() {
    let out = beliefvar(&[
        "query",
        &data("diagnosis.json"),
        "--evidence",
        "Test=positive",
    ]);
    let report: ReportFile = serde_json::from_str(&out.stdout).unwrap();
    let again: ReportFile = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    for (id, m) in &report.nodes {
        let n = &again.nodes[id];
        for (x, y) in m
            .mean
            .iter()
            .chain(&m.second)
            .chain(&m.variance)
            .zip(n.mean.iter().chain(&n.second).chain(&n.variance))
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert_eq!(report, again);
}

fn without_timestamp(stdout: &str) -> Value {
    let mut value: Value = serde_json::from_str(stdout).unwrap();
    value
        .as_object_mut()
        .unwrap()
        .remove("timestamp")
        .expect("timestamp present");
    value
}

#[test]
fn repeated_invocations_are_identical() {
    let q = [
        "query",
        &data("diagnosis.json"),
        "--evidence",
        "Symptom=yes",
    ];
    assert_eq!(
        without_timestamp(&beliefvar(&q).stdout),
        without_timestamp(&beliefvar(&q).stdout)
    );
    let path = data("diagnosis.json");
    let mc = |threads: &str| {
        beliefvar(&[
            "compare",
            &path,
            "--mode",
            "mc",
            "--samples",
            "5000",
            "--seed",
            "8",
            "--threads",
            threads,
        ])
        .stdout
    };
    let one = without_timestamp(&mc("1"));
    assert_eq!(one, without_timestamp(&mc("1")));
    assert_eq!(one, without_timestamp(&mc("4")));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_beliefvar");
    let ok = Command::new(bin)
        .args(["query", &data("two_point.json")])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let report: ReportFile = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((report.nodes["B"].mean[0] - 0.48).abs() < 1e-15);

    let missing = Command::new(bin)
        .args(["validate", "/nonexistent/net.json"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    let file = network_file(binary_pair(
        point([0.5, 0.5]),
        point([1.0, 0.0]),
        point([1.0, 0.0]),
    ));
    let inconsistent = Command::new(bin)
        .args(["query", path_of(&file), "--evidence", "B=b2"])
        .output()
        .unwrap();
    assert_eq!(inconsistent.status.code(), Some(3));
}
