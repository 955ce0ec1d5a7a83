mod common;

use std::fs;
use std::path::Path;

use common::{code, read_json, schema_errors, snapshot, stderr, syflow};
use serde_json::Value;
use tempfile::TempDir;

fn synth_small(dir: &Path) {
    let out = syflow(
        &[
            "synth", "--n", "1000", "--p", "4", "--c", "2", "--volume", "0.2", "--seed", "3",
            "--out",
        ]
        .map(String::from)
        .into_iter()
        .chain([dir.display().to_string()])
        .collect::<Vec<_>>(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn discover_small(dir: &Path) -> std::process::Output {
    let d = dir.display();
    syflow(&[
        "discover".to_string(),
        "--data".into(),
        format!("{d}/data.csv"),
        "--target".into(),
        "y".into(),
        "--truth".into(),
        format!("{d}/truth.json"),
        "--k".into(),
        "2".into(),
        "--epochs-marginal".into(),
        "200".into(),
        "--epochs-subgroup".into(),
        "200".into(),
        "--out".into(),
        format!("{d}/run"),
    ])
}

fn write_file(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn synth_defaults_plant_a_tenth() {
    let dir = TempDir::new().unwrap();
    let out = syflow(&["synth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let truth = read_json(&dir.path().join("truth.json"));
    let labels = truth["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 20_000);
    let frac = labels.iter().filter(|v| v.as_bool().unwrap()).count() as f64 / 20_000.0;
    let sd = (0.1f64 * 0.9 / 20_000.0).sqrt();
    assert!((frac - 0.1).abs() <= 3.0 * sd, "{frac}");
    assert_eq!(truth["seed"], 0);
    assert!(truth["planted_rule"]["clauses"].is_array());
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20_001);
}

#[test]
fn synth_full_volume_is_all_positive() {
    let dir = TempDir::new().unwrap();
    let out = syflow(&[
        "synth",
        "--n",
        "500",
        "--volume",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let truth = read_json(&dir.path().join("truth.json"));
    assert!(truth["labels"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v == true));
}

#[test]
fn synth_rejects_unknown_distribution() {
    let dir = TempDir::new().unwrap();
    let out = syflow(&[
        "synth",
        "--dist",
        "nosuch",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    for name in [
        "normal",
        "bimodal",
        "exponential",
        "cauchy",
        "beta",
        "rayleigh",
        "uniform_shift",
    ] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn synth_rejects_invalid_values() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["synth", "--c", "20", "--out", d],
        vec!["synth", "--volume", "1.5", "--out", d],
        vec!["synth", "--n", "ten", "--out", d],
    ] {
        assert_eq!(code(&syflow(&args)), 1, "{args:?}");
    }
}

#[test]
fn discover_requires_target() {
    let out = syflow(&["discover", "--data", "whatever.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--target"), "{}", stderr(&out));
}

#[test]
fn discover_reports_data_errors_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = syflow(&[
        "discover",
        "--data",
        "/nonexistent/data.csv",
        "--target",
        "y",
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    synth_small(dir.path());
    let data = dir.path().join("data.csv");
    let out = syflow(&[
        "discover",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "nope",
    ]);
    assert_eq!(code(&out), 1);
    let out = syflow(&[
        "discover",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "y",
        "--k",
        "0",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn discover_writes_schema_valid_report_with_f1() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let out = discover_small(dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = dir.path().join("run");
    let report = read_json(&run.join("report.json"));
    let errors = schema_errors(&report);
    assert!(errors.is_empty(), "{errors:#?}");

    let subgroups = report["subgroups"].as_array().unwrap();
    assert!(!subgroups.is_empty());
    for s in subgroups {
        let f1 = s["f1"].as_f64().expect("f1 present with truth");
        assert!((0.0..=1.0).contains(&f1));
    }
    assert_eq!(report["config"]["profiles"]["real_world"]["gamma"], 0.3);
    assert_eq!(report["config"]["profiles"]["synthetic"]["gamma"], 0.5);

    let rules = fs::read_to_string(run.join("rules.txt")).unwrap();
    assert_eq!(rules.lines().count(), subgroups.len());

    let memberships = fs::read_to_string(run.join("memberships.csv")).unwrap();
    let mut lines = memberships.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "row_index");
    assert_eq!(header.len(), 1 + 2 * subgroups.len());
    assert_eq!(lines.count(), 1000);

    let densities = fs::read_to_string(run.join("densities.csv")).unwrap();
    let mut lines = densities.lines();
    assert_eq!(
        lines.next().unwrap().split(',').count(),
        2 + subgroups.len()
    );
    let grid: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(grid.len(), 512);
    // densities are non-negative and the marginal integrates to about one
    let mass: f64 = grid
        .windows(2)
        .map(|w| 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]))
        .sum();
    assert!(grid.iter().all(|r| r[1..].iter().all(|&v| v >= 0.0)));
    assert!((mass - 1.0).abs() < 0.02, "{mass}");
}

#[test]
fn discover_is_deterministic() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    assert_eq!(code(&discover_small(dir.path())), 0);
    let first = snapshot(&dir.path().join("run"));
    assert_eq!(code(&discover_small(dir.path())), 0);
    assert_eq!(first, snapshot(&dir.path().join("run")));
}

fn eval_fixture(dir: &Path, memberships: &str) -> std::process::Output {
    // target 0..9 paired with a single constant feature
    let mut data = String::from("f,y\n");
    for i in 0..10 {
        data.push_str(&format!("1,{i}\n"));
    }
    write_file(&dir.join("data.csv"), &data);
    write_file(&dir.join("m.csv"), memberships);
    let d = dir.display();
    syflow(&[
        "eval".to_string(),
        "--data".into(),
        format!("{d}/data.csv"),
        "--target".into(),
        "y".into(),
        "--memberships".into(),
        format!("{d}/m.csv"),
        "--out".into(),
        d.to_string(),
    ])
}

#[test]
fn eval_population_column_is_unexceptional() {
    let dir = TempDir::new().unwrap();
    let mut m = String::from("row_index,all\n");
    for i in 0..10 {
        m.push_str(&format!("{i},1\n"));
    }
    let out = eval_fixture(dir.path(), &m);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = read_json(&dir.path().join("metrics.json"));
    let col = &metrics["columns"][0];
    assert_eq!(col["column"], "all");
    let e = &col["evaluation"];
    assert!((e["bc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(e["kl"].as_f64().unwrap().abs() < 1e-12);
    assert!(e["amd"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(metrics["gamma"], 1.0);
}

#[test]
fn eval_half_population_halves_kl() {
    let dir = TempDir::new().unwrap();
    let mut m = String::from("half\n");
    for i in 0..10 {
        // soft values threshold at one half
        m.push_str(if i < 5 { "0.9\n" } else { "0.1\n" });
    }
    let out = eval_fixture(dir.path(), &m);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let e = read_json(&dir.path().join("metrics.json"))["columns"][0]["evaluation"].clone();
    assert_eq!(e["size_frac"], 0.5);
    let (kl, corrected) = (
        e["kl"].as_f64().unwrap(),
        e["kl_size_corrected"].as_f64().unwrap(),
    );
    assert!(kl > 0.0);
    assert!((corrected - 0.5 * kl).abs() < 1e-15);
    let (amd, amd_c) = (
        e["amd"].as_f64().unwrap(),
        e["amd_size_corrected"].as_f64().unwrap(),
    );
    // mean of 0..5 is 2, mean of 0..10 is 4.5
    assert!((amd - 2.5).abs() < 1e-12);
    assert!((amd_c - 1.25).abs() < 1e-12);
}

#[test]
fn eval_truth_labels_score_perfect_f1() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let truth = read_json(&dir.path().join("truth.json"));
    let mut m = String::from("truth\n");
    for v in truth["labels"].as_array().unwrap() {
        m.push_str(if v == &Value::Bool(true) {
            "1\n"
        } else {
            "0\n"
        });
    }
    write_file(&dir.path().join("m.csv"), &m);
    let d = dir.path().display();
    let out = syflow(&[
        "eval".to_string(),
        "--data".into(),
        format!("{d}/data.csv"),
        "--target".into(),
        "y".into(),
        "--memberships".into(),
        format!("{d}/m.csv"),
        "--truth".into(),
        format!("{d}/truth.json"),
        "--out".into(),
        d.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = read_json(&dir.path().join("metrics.json"));
    assert_eq!(metrics["columns"][0]["f1"], 1.0);
}

#[test]
fn eval_rejects_row_count_mismatch() {
    let dir = TempDir::new().unwrap();
    let out = eval_fixture(dir.path(), "a\n1\n0\n");
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("rows"), "{}", stderr(&out));
}

#[test]
fn gradcheck_passes_and_is_reproducible() {
    let a = syflow(&["gradcheck"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    let stdout = String::from_utf8(a.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 5);
    assert_eq!(syflow(&["gradcheck"]).stdout, a.stdout);
}

#[test]
fn gradcheck_fails_on_a_flipped_gradient() {
    for suite in [
        "soft_predicate",
        "soft_rule",
        "flow_log_likelihood",
        "mixture_likelihood",
        "objective",
    ] {
        let out = syflow(&["gradcheck", "--instances", "5", "--inject-sign-flip", suite]);
        assert_ne!(code(&out), 0, "{suite}");
    }
}
