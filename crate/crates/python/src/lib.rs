//! Python module `fpt`. Queries, substitutions and results cross the
//! boundary as plain dicts.

use std::collections::BTreeMap;

use fpt_core::evaluation::{bootstrap_compare, BootstrapConfig, Metric, ModelBuilder, TreeBuilder};
use fpt_core::{conditional_probability, Error, PatientQuery, Statement, Weighting};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use serde::Serialize;
use serde_json::{json, Value};

create_exception!(fpt, FptError, PyValueError, "Invalid model, data or query.");
create_exception!(fpt, UndefinedError, FptError, "The probability is undefined for the given conditions.");

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_undefined() => UndefinedError::new_err(e.to_string()),
        e => FptError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| FptError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| FptError::new_err(e.to_string()))
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn weighting(name: &str) -> PyResult<Weighting> {
    serde_json::from_value(json!(name))
        .map_err(|_| FptError::new_err(format!("unknown weighting `{name}`; use fuzzy, projected or crisp")))
}

/// A fitted fuzzy probability tree.
#[pyclass(module = "fpt", frozen)]
struct Model {
    inner: fpt_core::Model,
    report: fpt_core::IngestReport,
}

impl Model {
    fn query(&self, query: &Bound<'_, PyAny>, class: u8, strict: bool) -> PyResult<PatientQuery> {
        let mut q = self.inner.query_from_json(&from_py(query)?).map_err(py_err)?;
        q.class = class;
        q.strict |= strict;
        Ok(q)
    }
}

#[pymethods]
impl Model {
    /// Reads a spec and a CSV file and builds the tree.
    #[staticmethod]
    fn load(spec: std::path::PathBuf, data: std::path::PathBuf) -> PyResult<Self> {
        let (inner, _, report) = fpt_core::Model::load(spec, data).map_err(py_err)?;
        Ok(Model { inner, report })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.tree().schema().variables().iter().map(|v| v.name.clone()).collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }

    fn ingest_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.report)
    }

    fn tree_json(&self) -> String {
        self.inner.tree().to_json()
    }

    /// `query` is a flat dict of variable or raw feature names to values, or
    /// a structured dict with `statements` and `raw_values`.
    #[pyo3(signature = (query, class_=1, weighting="fuzzy", strict=false))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        query: &Bound<'py, PyAny>,
        class_: u8,
        weighting: &str,
        strict: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let q = self.query(query, class_, strict)?;
        let w = self::weighting(weighting)?;
        let prediction = self.inner.predict_with(&q, w).map_err(py_err)?;
        to_py(py, &prediction)
    }

    #[pyo3(signature = (query, threshold=None))]
    fn decide<'py>(
        &self,
        py: Python<'py>,
        query: &Bound<'py, PyAny>,
        threshold: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let q = self.query(query, 1, false)?;
        to_py(py, &self.inner.decide(&q, threshold).map_err(py_err)?)
    }

    /// `substitutions` maps variables or raw feature names to new values;
    /// `None` or `""` unsets.
    #[pyo3(signature = (query, substitutions, threshold=None))]
    fn counterfactual<'py>(
        &self,
        py: Python<'py>,
        query: &Bound<'py, PyAny>,
        substitutions: &Bound<'py, PyDict>,
        threshold: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let q = self.query(query, 1, false)?;
        let Value::Object(map) = from_py(substitutions.as_any())? else {
            return Err(FptError::new_err("substitutions must be a dict"));
        };
        let subs = map
            .iter()
            .map(|(k, v)| self.inner.substitution(k, &scalar(v)))
            .collect::<fpt_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        to_py(py, &self.inner.counterfactual(&q, &subs, threshold).map_err(py_err)?)
    }

    /// `P(class | conditions)` on the tree, no fallback.
    #[pyo3(signature = (conditions, class_=1))]
    fn conditional(&self, conditions: BTreeMap<String, String>, class_: u8) -> PyResult<f64> {
        let statements: Vec<Statement> = conditions.iter().map(|(k, v)| Statement::new(k, v)).collect();
        conditional_probability(self.inner.tree(), &statements, class_).map_err(py_err)
    }

    /// Term degrees of a fuzzy-bound variable at `x`.
    #[pyo3(signature = (variable, x, context=None))]
    fn degrees(
        &self,
        variable: &str,
        x: f64,
        context: Option<BTreeMap<String, String>>,
    ) -> PyResult<Vec<(String, f64)>> {
        self.inner
            .degrees(variable, x, &context.unwrap_or_default())
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let stats = self.inner.stats();
        format!(
            "Model(variables={:?}, rows={}, realisations={})",
            self.variables(),
            stats.training_rows,
            stats.realisations
        )
    }
}

/// Bootstrap comparison of the fuzzy (`FPT`) and crisp (`PT`) trees.
#[pyfunction]
#[pyo3(signature = (spec, data, resamples=1000, seed=0, test_fraction=0.2, threshold=None, models=vec!["FPT".to_string(), "PT".to_string()], parallel=true))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    spec: std::path::PathBuf,
    data: std::path::PathBuf,
    resamples: usize,
    seed: u64,
    test_fraction: f64,
    threshold: Option<f64>,
    models: Vec<String>,
    parallel: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let (model, dataset, _) = fpt_core::Model::load(spec, data).map_err(py_err)?;
    let config = BootstrapConfig {
        resamples,
        seed,
        test_fraction,
        threshold: threshold.unwrap_or(model.threshold()),
        parallel,
        ..BootstrapConfig::default()
    };
    let builders = models
        .iter()
        .map(|m| match m.to_ascii_uppercase().as_str() {
            "FPT" => Ok(TreeBuilder::fuzzy(model.spec().clone())),
            "PT" => Ok(TreeBuilder::crisp(model.spec().clone())),
            _ => Err(FptError::new_err(format!("unknown model `{m}`; use FPT or PT"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<&dyn ModelBuilder> = builders.iter().map(|b| b as &dyn ModelBuilder).collect();
    let comparison = py
        .detach(|| bootstrap_compare(&dataset.records, &refs, &config))
        .map_err(py_err)?;
    let mut result = json!({ "reports": comparison.reports });
    if refs.len() == 2 {
        let diffs: Vec<_> = Metric::ALL.iter().map(|m| comparison.paired_difference(*m, 0, 1)).collect();
        result["paired_differences"] = json!({
            "minuend": refs[0].name(),
            "subtrahend": refs[1].name(),
            "metrics": diffs,
        });
    }
    to_py(py, &result)
}

#[pymodule]
fn fpt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("FptError", m.py().get_type::<FptError>())?;
    m.add("UndefinedError", m.py().get_type::<UndefinedError>())?;
    Ok(())
}
