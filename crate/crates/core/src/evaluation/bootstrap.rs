use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, Metric, Metrics};
use crate::data::Record;
use crate::error::{Error, Result};
use crate::ingest::ModelSpec;
use crate::inference::Weighting;
use crate::model::Model;

pub const RESAMPLING: &str =
    "training partition resampled with replacement; test partition held fixed";
pub const CI_METHOD: &str = "percentile (2.5th and 97.5th, linear interpolation)";

pub trait Classifier: Send + Sync {
    fn positive_probability(&self, record: &Record) -> Result<f64>;
}

pub trait ModelBuilder: Send + Sync {
    fn name(&self) -> String;
    fn build(&self, train: &[Record]) -> Result<Box<dyn Classifier>>;
}

/// Builds probability trees from a spec; fuzzy or crisp traversal.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    spec: ModelSpec,
    weighting: Weighting,
}

impl TreeBuilder {
    pub fn fuzzy(spec: ModelSpec) -> Self {
        TreeBuilder {
            spec,
            weighting: Weighting::Fuzzy,
        }
    }

    pub fn crisp(spec: ModelSpec) -> Self {
        TreeBuilder {
            spec,
            weighting: Weighting::Crisp,
        }
    }
}

struct TreeClassifier {
    model: Model,
    weighting: Weighting,
}

impl Classifier for TreeClassifier {
    fn positive_probability(&self, record: &Record) -> Result<f64> {
        let query = self.model.query_for_record(record);
        Ok(self.model.predict_with(&query, self.weighting)?.probability)
    }
}

impl ModelBuilder for TreeBuilder {
    fn name(&self) -> String {
        match self.weighting {
            Weighting::Crisp => "PT".into(),
            Weighting::Fuzzy | Weighting::Projected => "FPT".into(),
        }
    }

    fn build(&self, train: &[Record]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(TreeClassifier {
            model: Model::fit(self.spec.clone(), train)?,
            weighting: self.weighting,
        }))
    }
}

impl Classifier for Model {
    fn positive_probability(&self, record: &Record) -> Result<f64> {
        Ok(self.predict(&self.query_for_record(record))?.probability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub threshold: f64,
    pub parallel: bool,
    /// Redraws allowed per resample when it comes out single-class.
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            seed: 0,
            test_fraction: 0.2,
            threshold: 0.5,
            parallel: true,
            max_redraws: 100,
        }
    }
}

/// Splits each class separately so both partitions keep the class mix.
pub fn stratified_split(
    records: &[Record],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Record>, Vec<Record>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_index = vec![false; records.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].label == class)
            .collect();
        if members.is_empty() {
            return Err(Error::Stratification);
        }
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        for &i in &members[..n_test] {
            test_index[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = records
        .iter()
        .zip(&test_index)
        .partition(|(_, &is_test)| is_test);
    let train: Vec<Record> = train.into_iter().map(|(r, _)| r.clone()).collect();
    let test: Vec<Record> = test.into_iter().map(|(r, _)| r.clone()).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} leaves an empty partition for {} rows",
            records.len()
        )));
    }
    Ok((train, test))
}

pub fn confusion(
    classifier: &dyn Classifier,
    test: &[Record],
    threshold: f64,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for record in test {
        let p = classifier.positive_probability(record)?;
        cm.record(record.label, u8::from(p >= threshold));
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleOutcome {
    pub index: usize,
    pub redraws: usize,
    /// One per builder, in the order given.
    pub models: Vec<ModelOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Mean over the resamples where the metric is defined.
    pub mean: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    /// Resamples whose denominator was zero.
    pub undefined_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub resampling: String,
    pub ci_method: String,
    pub resamples: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub threshold: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_positives: usize,
    pub redraws: usize,
    pub metrics: Vec<MetricSummary>,
}

impl EvaluationReport {
    pub fn metric(&self, metric: Metric) -> &MetricSummary {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .expect("every metric is summarised")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Several models scored on the same resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvaluationReport>,
    pub resamples: Vec<ResampleOutcome>,
}

impl Comparison {
    /// Distribution of `metric(a) - metric(b)` over resamples where both are
    /// defined.
    pub fn paired_difference(&self, metric: Metric, a: usize, b: usize) -> MetricSummary {
        let diffs: Vec<Option<f64>> = self
            .resamples
            .iter()
            .map(|r| {
                let x = r.models[a].metrics.get(metric)?;
                let y = r.models[b].metrics.get(metric)?;
                Some(x - y)
            })
            .collect();
        summarise(metric, &diffs)
    }
}

pub fn bootstrap_evaluate(
    records: &[Record],
    builder: &dyn ModelBuilder,
    config: &BootstrapConfig,
) -> Result<EvaluationReport> {
    let mut comparison = bootstrap_compare(records, &[builder], config)?;
    Ok(comparison.reports.remove(0))
}

/// Splits once, then for each resample draws a training set with
/// replacement, builds every model on it and scores the fixed test set.
pub fn bootstrap_compare(
    records: &[Record],
    builders: &[&dyn ModelBuilder],
    config: &BootstrapConfig,
) -> Result<Comparison> {
    if config.resamples == 0 {
        return Err(Error::Config("at least one resample is required".into()));
    }
    crate::decision::check_threshold(config.threshold)?;
    let (train, test) = stratified_split(records, config.test_fraction, config.seed)?;

    let run = |index: usize| -> Result<ResampleOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64 + 1);
        let mut redraws = 0;
        let sample = loop {
            let sample: Vec<Record> = (0..train.len())
                .map(|_| train[rng.random_range(0..train.len())].clone())
                .collect();
            let positives = sample.iter().filter(|r| r.label == 1).count();
            if positives > 0 && positives < sample.len() {
                break sample;
            }
            if redraws == config.max_redraws {
                return Err(Error::Config(format!(
                    "resample {index} stayed single-class after {redraws} redraws"
                )));
            }
            redraws += 1;
            log::warn!("resample {index} drew a single class; redrawing ({redraws})");
        };
        let models = builders
            .iter()
            .map(|b| {
                let classifier = b.build(&sample)?;
                let confusion = confusion(classifier.as_ref(), &test, config.threshold)?;
                Ok(ModelOutcome {
                    metrics: confusion.metrics(),
                    confusion,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResampleOutcome {
            index,
            redraws,
            models,
        })
    };

    let resamples: Vec<ResampleOutcome> = if config.parallel {
        (0..config.resamples).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.resamples).map(run).collect::<Result<_>>()?
    };

    let redraws = resamples.iter().map(|r| r.redraws).sum();
    let reports = builders
        .iter()
        .enumerate()
        .map(|(m, builder)| EvaluationReport {
            model: builder.name(),
            resampling: RESAMPLING.into(),
            ci_method: CI_METHOD.into(),
            resamples: config.resamples,
            seed: config.seed,
            test_fraction: config.test_fraction,
            threshold: config.threshold,
            train_rows: train.len(),
            test_rows: test.len(),
            test_positives: test.iter().filter(|r| r.label == 1).count(),
            redraws,
            metrics: Metric::ALL
                .iter()
                .map(|&metric| {
                    let values: Vec<Option<f64>> = resamples
                        .iter()
                        .map(|r| r.models[m].metrics.get(metric))
                        .collect();
                    summarise(metric, &values)
                })
                .collect(),
        })
        .collect();
    Ok(Comparison { reports, resamples })
}

fn summarise(metric: Metric, values: &[Option<f64>]) -> MetricSummary {
    let mut defined: Vec<f64> = values.iter().flatten().copied().collect();
    let undefined_resamples = values.len() - defined.len();
    if defined.is_empty() {
        return MetricSummary {
            metric,
            mean: None,
            ci_lower: None,
            ci_upper: None,
            undefined_resamples,
        };
    }
    defined.sort_by(f64::total_cmp);
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    MetricSummary {
        metric,
        mean: Some(mean),
        ci_lower: Some(percentile(&defined, 0.025)),
        ci_upper: Some(percentile(&defined, 0.975)),
        undefined_resamples,
    }
}

/// Linear interpolation between order statistics at `p * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Plain-text table: one row per model, each cell `mean% [lower - upper]`.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    if let Some(first) = reports.first() {
        let _ = writeln!(
            out,
            "Based on {} bootstrapped data sets ({}). Threshold = {:.2}.",
            first.resamples, first.resampling, first.threshold
        );
        let _ = writeln!(
            out,
            "Train rows {}, test rows {} ({} positive), seed {}.",
            first.train_rows, first.test_rows, first.test_positives, first.seed
        );
    }
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
        .chain(Metric::ALL.iter().map(|m| format!("{} (95% CI)", m.title())))
        .collect()];
    for report in reports {
        let mut row = vec![report.model.clone()];
        for metric in Metric::ALL {
            let s = report.metric(metric);
            row.push(match (s.mean, s.ci_lower, s.ci_upper) {
                (Some(mean), Some(lo), Some(hi)) => format!(
                    "{:.1}% [{} - {}]",
                    mean * 100.0,
                    trim_percent(lo),
                    trim_percent(hi)
                ),
                _ => "undefined".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    for report in reports {
        for s in report.metrics.iter().filter(|s| s.undefined_resamples > 0) {
            let _ = writeln!(
                out,
                "note: {} {} undefined in {} of {} resamples",
                report.model,
                s.metric.title().to_lowercase(),
                s.undefined_resamples,
                report.resamples
            );
        }
    }
    out
}

fn trim_percent(x: f64) -> String {
    let s = format!("{:.1}", x * 100.0);
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}
