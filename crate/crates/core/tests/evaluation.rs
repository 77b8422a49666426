mod common;

use std::path::PathBuf;

use fpt_core::evaluation::{
    bootstrap_compare, bootstrap_evaluate, generate_cohort, percentile, stratified_split,
    BootstrapConfig, CohortSpec, ConfusionMatrix, Metric, TreeBuilder,
};
use fpt_core::{Error, ModelSpec};

fn data(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(path)
}

fn synthetic(n: usize, seed: u64) -> (ModelSpec, Vec<fpt_core::Record>) {
    let spec = ModelSpec::load(data("synthetic/spec.json")).unwrap();
    let cohort_spec =
        CohortSpec::from_json(&std::fs::read_to_string(data("synthetic/cohort.json")).unwrap()).unwrap();
    let (dataset, _) = generate_cohort(&cohort_spec, n, seed).unwrap().to_dataset(&spec).unwrap();
    (spec, dataset.records)
}

#[test]
fn metrics_match_hand_worked_matrices() {
    for ((tp, fp, tn, fn_), expected) in common::hand_matrices() {
        let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
        let got = cm.metrics();
        let order = [Metric::Accuracy, Metric::Sensitivity, Metric::Specificity, Metric::Precision];
        for (metric, want) in order.into_iter().zip(expected) {
            assert_eq!(got.get(metric), want, "{metric:?} of {cm:?}");
        }
    }
}

#[test]
fn confusion_from_labels() {
    let cm = ConfusionMatrix::from_labels(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]);
    assert_eq!(cm, ConfusionMatrix::new(2, 1, 1, 1));
}

#[test]
fn split_keeps_class_shares() {
    let (_, records) = synthetic(500, 1);
    let (train, test) = stratified_split(&records, 0.2, 9).unwrap();
    assert_eq!(train.len() + test.len(), 500);
    let positives = records.iter().filter(|r| r.label == 1).count();
    let test_positives = test.iter().filter(|r| r.label == 1).count();
    assert_eq!(test_positives, (positives as f64 * 0.2).round() as usize);
    let (again, _) = stratified_split(&records, 0.2, 9).unwrap();
    assert_eq!(train, again);
}

#[test]
fn repeated_runs_are_identical() {
    let (spec, records) = synthetic(500, 2);
    let builders = [TreeBuilder::fuzzy(spec.clone()), TreeBuilder::crisp(spec)];
    let refs: Vec<&dyn fpt_core::evaluation::ModelBuilder> =
        builders.iter().map(|b| b as &dyn fpt_core::evaluation::ModelBuilder).collect();
    let config = BootstrapConfig {
        resamples: 40,
        seed: 11,
        ..BootstrapConfig::default()
    };
    let a = serde_json::to_string(&bootstrap_compare(&records, &refs, &config).unwrap()).unwrap();
    let b = serde_json::to_string(&bootstrap_compare(&records, &refs, &config).unwrap()).unwrap();
    let serial = BootstrapConfig {
        parallel: false,
        ..config
    };
    let c = serde_json::to_string(&bootstrap_compare(&records, &refs, &serial).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn different_seeds_differ() {
    let (spec, records) = synthetic(300, 3);
    let builder = TreeBuilder::fuzzy(spec);
    let run = |seed| {
        let config = BootstrapConfig {
            resamples: 20,
            seed,
            ..BootstrapConfig::default()
        };
        bootstrap_evaluate(&records, &builder, &config).unwrap()
    };
    assert_ne!(run(1).metrics, run(2).metrics);
}

#[test]
fn single_class_data_cannot_be_split() {
    let (spec, mut records) = synthetic(100, 4);
    for r in &mut records {
        r.label = 0;
    }
    let config = BootstrapConfig {
        resamples: 5,
        ..BootstrapConfig::default()
    };
    let err = bootstrap_evaluate(&records, &TreeBuilder::fuzzy(spec), &config).unwrap_err();
    assert!(matches!(err, Error::Stratification));
}

#[test]
fn percentile_interpolates() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(percentile(&xs, 0.0), 1.0);
    assert_eq!(percentile(&xs, 1.0), 5.0);
    assert_eq!(percentile(&xs, 0.5), 3.0);
    assert!((percentile(&xs, 0.025) - 1.1).abs() < 1e-12);
}

#[test]
fn interval_brackets_the_mean() {
    let (spec, records) = synthetic(500, 5);
    let config = BootstrapConfig {
        resamples: 60,
        seed: 3,
        ..BootstrapConfig::default()
    };
    let report = bootstrap_evaluate(&records, &TreeBuilder::fuzzy(spec), &config).unwrap();
    assert_eq!(report.model, "FPT");
    for m in &report.metrics {
        let (lo, mean, hi) = (m.ci_lower.unwrap(), m.mean.unwrap(), m.ci_upper.unwrap());
        assert!(lo <= mean && mean <= hi, "{m:?}");
    }
}

#[test]
fn cohort_generation_is_seeded() {
    let cohort_spec =
        CohortSpec::from_json(&std::fs::read_to_string(data("ckd/cohort.json")).unwrap()).unwrap();
    let a = generate_cohort(&cohort_spec, 200, 5).unwrap();
    let b = generate_cohort(&cohort_spec, 200, 5).unwrap();
    let c = generate_cohort(&cohort_spec, 200, 6).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}
