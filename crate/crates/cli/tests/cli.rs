use std::path::PathBuf;
use std::process::Command;

use fpt_cli::{run, EXIT_DATA, EXIT_OK, EXIT_UNDEFINED, EXIT_USAGE};
use fpt_core::Model;
use serde_json::Value;

fn data(path: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(path)
        .to_string_lossy()
        .into_owned()
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fpt(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("fpt").chain(args.iter().copied()), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn thyroid(verb: &str) -> Vec<String> {
    vec![
        verb.to_string(),
        "--spec".into(),
        data("thyroid/spec.json"),
        "--data".into(),
        data("thyroid/train.csv"),
    ]
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn fpt_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    fpt(&refs)
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn binary_without_arguments_prints_usage() {
    let output = Command::new(env!("CARGO_BIN_EXE_fpt")).output().unwrap();
    assert_eq!(output.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&output.stderr).contains("Usage"));
    assert!(output.stdout.is_empty());
}

#[test]
fn usage_errors() {
    assert_eq!(fpt(&[]).code, EXIT_USAGE);
    let r = fpt(&["stats", "--bogus"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("--bogus"));
    assert_eq!(fpt(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(fpt(&["stats", "--spec", "x.json"]).code, EXIT_USAGE);
    let r = fpt_owned(&with(thyroid("predict"), &["--class", "2"]));
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn help_and_version() {
    let r = fpt(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("export-tree"));
    assert_eq!(fpt(&["--version"]).code, EXIT_OK);
}

#[test]
fn predict_demo_patient() {
    let r = fpt_owned(&with(thyroid("predict"), &["--query", &data("thyroid/demo-patient.json")]));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v = json(&r.stdout);
    assert!((v["probability"].as_f64().unwrap() - 0.427).abs() < 0.001);
    assert!((v["p0"].as_f64().unwrap() - 0.573).abs() < 0.001);
    assert_eq!(v["label"], 0);

    let r = fpt_owned(&with(
        thyroid("predict"),
        &["--query", "TIRADS=TIR3B,Gender=F,Age=48,Thyroiditis=no,Struma=no,NoduleSize=18", "--class", "0"],
    ));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!((json(&r.stdout)["probability"].as_f64().unwrap() - 0.573).abs() < 0.001);
}

#[test]
fn predict_with_overrides_and_table() {
    let r = fpt_owned(&with(
        thyroid("predict"),
        &["--query", &data("thyroid/demo-patient.json"), "--set", "NoduleSize=25", "--format", "table"],
    ));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.starts_with("P(class = 1)  0.4000\n"), "{}", r.stdout);
    assert!(r.stdout.contains("leaf"));
}

#[test]
fn crisp_weighting_takes_one_path() {
    let r = fpt_owned(&with(
        thyroid("predict"),
        &["--query", &data("thyroid/demo-patient.json"), "--weighting", "crisp"],
    ));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["contributions"].as_array().unwrap().len(), 1);
    // age 48 is under 50, size 18 under 20: both leaves in that branch are benign
    assert_eq!(v["probability"], 0.0);
}

#[test]
fn stats_reproduce_densities() {
    let r = fpt_owned(&with(thyroid("stats"), &["--format", "table"]));
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("Mean rows per realisation    2.51"), "{}", r.stdout);
    let r = fpt(&["stats", "--spec", &data("ckd/spec.json"), "--data", &data("ckd/train.csv")]);
    let v = json(&r.stdout);
    assert!((v["mean_rows_per_realisation"].as_f64().unwrap() - 5.08).abs() < 0.005);
    assert_eq!(v["realisations"], 512);
}

#[test]
fn build_reports_exclusions() {
    let r = fpt(&["build", "--spec", &data("ckd/spec.json"), "--data", &data("ckd/train.csv")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["ingest"]["rows_retained"], 2599);
    let rules: Vec<&str> = v["ingest"]["exclusions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["rule"].as_str().unwrap())
        .collect();
    assert!(rules.contains(&"duplicate") && rules.contains(&"missing-required"));
    let r = fpt(&["build", "--format", "table", "--spec", &data("ckd/spec.json"), "--data", &data("ckd/train.csv")]);
    assert!(r.stdout.contains("Rows retained  2599"));
}

fn unseen_combination() -> String {
    let model = Model::load(data("thyroid/spec.json"), data("thyroid/train.csv")).unwrap().0;
    let r = model
        .tree()
        .realisations()
        .into_iter()
        .find(|r| r.probability == 0.0)
        .unwrap();
    r.path
        .iter()
        .map(|(s, _)| format!("{}={}", s.variable, s.value))
        .collect::<Vec<_>>()
        .join(",")
}

#[test]
fn zero_support_is_exit_3_only_when_strict() {
    let query = unseen_combination();
    let r = fpt_owned(&with(thyroid("predict"), &["--query", &query]));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let r = fpt_owned(&with(thyroid("predict"), &["--query", &query, "--strict"]));
    assert_eq!(r.code, EXIT_UNDEFINED, "{}", r.stdout);
    assert!(r.stderr.contains("undefined"));
    assert!(r.stdout.is_empty());
}

#[test]
fn data_errors_are_exit_2() {
    let r = fpt(&["stats", "--spec", "missing.json", "--data", "missing.csv"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("missing.json"));
    let r = fpt_owned(&with(thyroid("predict"), &["--query", "Weight=70"]));
    assert_eq!(r.code, EXIT_DATA);
    let r = fpt_owned(&with(thyroid("predict"), &["--query", "nofile.json"]));
    assert_eq!(r.code, EXIT_DATA);
    let r = fpt_owned(&with(thyroid("predict"), &["--threshold", "1.2"]));
    assert_eq!(r.code, EXIT_DATA);
    let r = fpt(&["stats", "--spec", &data("thyroid/spec.json"), "--data", &data("ckd/train.csv")]);
    assert_eq!(r.code, EXIT_DATA);
}

#[test]
fn counterfactual_delta() {
    let r = fpt_owned(&with(
        thyroid("counterfactual"),
        &["--query", &data("thyroid/demo-patient.json"), "--set", "NoduleSize=25"],
    ));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v = json(&r.stdout);
    let expected = 0.4 - 0.8 * (0.2 * 2.0 / 3.0 + 0.8 * 0.5);
    assert!((v["delta"].as_f64().unwrap() - expected).abs() < 1e-9);

    let r = fpt_owned(&with(
        thyroid("counterfactual"),
        &["--query", &data("thyroid/demo-patient.json"), "--set", "Struma=yes", "--format", "table"],
    ));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.starts_with("Struma: 0 -> 1\n"), "{}", r.stdout);
    assert!(r.stdout.contains("Delta"));

    let r = fpt_owned(&with(thyroid("counterfactual"), &["--query", &data("thyroid/demo-patient.json")]));
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn evaluation_output_is_reproducible() {
    let args = with(thyroid("evaluate"), &["--resamples", "12", "--seed", "5"]);
    let a = fpt_owned(&args);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    let b = fpt_owned(&args);
    let c = fpt_owned(&with(args.clone(), &["--serial"]));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let v = json(&a.stdout);
    assert_eq!(v["reports"][0]["model"], "FPT");
    assert_eq!(v["reports"][1]["model"], "PT");
    assert_eq!(v["paired_differences"]["metrics"].as_array().unwrap().len(), 4);

    let t = fpt_owned(&with(args.clone(), &["--format", "table", "--models", "FPT"]));
    assert_eq!(t.code, EXIT_OK);
    assert!(t.stdout.contains("Based on 12 bootstrapped data sets"));
    assert!(!t.stdout.contains("Paired"));

    let bad = fpt_owned(&with(thyroid("evaluate"), &["--test-fraction", "1.5"]));
    assert_eq!(bad.code, EXIT_DATA);
}

#[test]
fn export_tree_round_trips() {
    let r = fpt_owned(&thyroid("export-tree"));
    assert_eq!(r.code, EXIT_OK);
    let tree = fpt_core::ProbabilityTree::from_json(&r.stdout).unwrap();
    assert_eq!(tree.stats().realisations, 160);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.json");
    let r = fpt_owned(&with(thyroid("export-tree"), &["--out", path.to_str().unwrap()]));
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", tree.to_json()));
}
