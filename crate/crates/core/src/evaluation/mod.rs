//! Bootstrap evaluation: stratified split, resampling of the training
//! partition, confusion-matrix metrics and percentile intervals.

mod bootstrap;
pub mod cohort;
mod metrics;

pub use bootstrap::{
    bootstrap_compare, bootstrap_evaluate, confusion, percentile, render_table, stratified_split,
    BootstrapConfig, Classifier, Comparison, EvaluationReport, MetricSummary, ModelBuilder,
    ModelOutcome, ResampleOutcome, TreeBuilder, CI_METHOD, RESAMPLING,
};
pub use cohort::{generate_cohort, Cohort, CohortSpec};
pub use metrics::{ConfusionMatrix, Metric, Metrics};
