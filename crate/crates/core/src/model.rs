use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::data::{Cell, Dataset, Record};
use crate::decision::{self, CounterfactualResult, Decision, Substitution};
use crate::error::{Error, Result};
use crate::ingest::{self, IngestReport, ModelSpec};
use crate::inference::{self, PatientQuery, Prediction, Weighting};
use crate::tree::{BuildOptions, ProbabilityTree, Statement, TreeStats};

/// A model spec together with the tree induced from training data.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    tree: ProbabilityTree,
}

impl Model {
    /// Builds the tree from the complete records; flagged rows cannot be
    /// placed on a single path and are skipped.
    pub fn fit(spec: ModelSpec, records: &[Record]) -> Result<Self> {
        let complete: Vec<Record> = records.iter().filter(|r| r.is_complete()).cloned().collect();
        if complete.len() < records.len() {
            log::info!(
                "building from {} complete rows, skipping {} with missing values",
                complete.len(),
                records.len() - complete.len()
            );
        }
        let tree = ProbabilityTree::build(
            &complete,
            spec.schema()?,
            spec.bindings(),
            BuildOptions {
                smoothing: spec.smoothing,
            },
        )?;
        Ok(Model { spec, tree })
    }

    /// Loads a spec and a CSV file and fits the model.
    pub fn load(
        spec_path: impl AsRef<Path>,
        data_path: impl AsRef<Path>,
    ) -> Result<(Self, Dataset, IngestReport)> {
        let spec = ModelSpec::load(spec_path)?;
        let (dataset, report) = ingest::load_dataset(data_path, &spec)?;
        let model = Model::fit(spec, &dataset.records)?;
        Ok((model, dataset, report))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tree(&self) -> &ProbabilityTree {
        &self.tree
    }

    pub fn threshold(&self) -> f64 {
        self.spec.threshold
    }

    pub fn stats(&self) -> TreeStats {
        self.tree.stats()
    }

    pub fn predict(&self, query: &PatientQuery) -> Result<Prediction> {
        inference::predict(&self.tree, query)
    }

    pub fn predict_with(&self, query: &PatientQuery, weighting: Weighting) -> Result<Prediction> {
        inference::predict_with(&self.tree, query, weighting)
    }

    pub fn decide(&self, query: &PatientQuery, threshold: Option<f64>) -> Result<Decision> {
        decision::decide(&self.tree, query, threshold.unwrap_or(self.spec.threshold))
    }

    pub fn counterfactual(
        &self,
        query: &PatientQuery,
        substitutions: &[Substitution],
        threshold: Option<f64>,
    ) -> Result<CounterfactualResult> {
        decision::counterfactual(
            &self.tree,
            query,
            substitutions,
            threshold.unwrap_or(self.spec.threshold),
        )
    }

    /// The query describing a data row: categorical cells become statements,
    /// numeric cells of fuzzy-bound variables become raw values, and missing
    /// cells are left out.
    pub fn query_for_record(&self, record: &Record) -> PatientQuery {
        let mut query = PatientQuery {
            context: record.context.clone(),
            ..PatientQuery::default()
        };
        for (var, cell) in self.tree.schema().variables().iter().zip(&record.cells) {
            match cell {
                Some(Cell::Level(level)) => query.statements.push(Statement::new(&var.name, level)),
                Some(Cell::Number(x)) => {
                    query.raw_values.insert(var.name.clone(), *x);
                }
                None => {}
            }
        }
        query
    }

    /// Parses `key=value` pairs. Keys are schema variables, raw feature
    /// names, selector columns, `class` or `strict`. A fuzzy-bound variable
    /// given one of its term labels gets that term; any other number is
    /// taken as its raw value.
    pub fn query_from_pairs<K: AsRef<str>, V: AsRef<str>>(
        &self,
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<PatientQuery> {
        let mut query = PatientQuery::default();
        let context_columns = self.spec.context_columns();
        for (key, value) in pairs {
            let (key, value) = (key.as_ref().trim(), value.as_ref().trim());
            match key {
                "class" => {
                    query.class = match value {
                        "0" => 0,
                        "1" => 1,
                        v if v == self.spec.class.positive => 1,
                        v if v == self.spec.class.negative => 0,
                        v => return Err(Error::query(format!("class must be 0 or 1, got `{v}`"))),
                    }
                }
                "strict" => {
                    query.strict = value
                        .parse()
                        .map_err(|_| Error::query(format!("strict must be true or false, got `{value}`")))?
                }
                _ => self.assign(&mut query, key, value, &context_columns)?,
            }
        }
        self.sort_statements(&mut query);
        Ok(query)
    }

    /// Parses a query given as JSON: either a [`PatientQuery`] document
    /// (`statements`, `raw_values`, ...) or a flat object of `key: value`
    /// pairs as accepted by [`Model::query_from_pairs`].
    pub fn query_from_json(&self, value: &Value) -> Result<PatientQuery> {
        let Value::Object(map) = value else {
            return Err(Error::query("a query must be a JSON object"));
        };
        let structured = ["statements", "raw_values", "context"]
            .iter()
            .any(|k| map.contains_key(*k));
        if structured {
            let mut map = map.clone();
            if let Some(Value::Object(statements)) = map.get("statements") {
                let list: Vec<Value> = statements
                    .iter()
                    .map(|(k, v)| serde_json::json!({ "variable": k, "value": scalar(v) }))
                    .collect();
                map.insert("statements".into(), Value::Array(list));
            }
            let mut query: PatientQuery = serde_json::from_value(Value::Object(map))
                .map_err(|e| Error::query(e.to_string()))?;
            for s in &mut query.statements {
                if let Some(var) = self.spec.variables.iter().find(|v| v.name == s.variable) {
                    if let Some(level) = var.recode.get(&s.value) {
                        s.value = level.clone();
                    }
                }
            }
            self.sort_statements(&mut query);
            return Ok(query);
        }
        self.query_from_pairs(map.iter().map(|(k, v)| (k.clone(), scalar(v))))
    }

    fn assign(
        &self,
        query: &mut PatientQuery,
        key: &str,
        value: &str,
        context_columns: &[String],
    ) -> Result<()> {
        let schema = self.tree.schema();
        if let Some(index) = schema.index_of(key) {
            let var = &self.spec.variables[index];
            let is_term = schema.get(index).value_index(value).is_some();
            if self.spec.binding(key).is_some() && !is_term {
                if let Ok(x) = value.parse::<f64>() {
                    query.raw_values.insert(key.to_string(), x);
                    return Ok(());
                }
            }
            let level = var.recode.get(value).map(String::as_str).unwrap_or(value);
            query.statements.retain(|s| s.variable != key);
            query.statements.push(Statement::new(key, level));
            return Ok(());
        }
        if let Some(binding) = self.spec.fuzzy.iter().find(|b| b.raw_feature() == key) {
            let x: f64 = value
                .parse()
                .map_err(|_| Error::query(format!("`{key}` needs a number, got `{value}`")))?;
            query.raw_values.insert(binding.variable().to_string(), x);
            return Ok(());
        }
        if context_columns.iter().any(|c| c == key) {
            query.context.insert(key.to_string(), value.to_string());
            return Ok(());
        }
        Err(Error::query(format!("unknown query key `{key}`")))
    }

    /// A substitution from a `key`/`value` pair, where `key` may also be a
    /// raw feature name. On a fuzzy-bound variable a term label is a term and
    /// any other number a raw value; an empty value unsets the variable.
    pub fn substitution(&self, key: &str, value: &str) -> Result<Substitution> {
        let (key, value) = (key.trim(), value.trim());
        let variable = match self.tree.schema().index_of(key) {
            Some(_) => key,
            None => self
                .spec
                .fuzzy
                .iter()
                .find(|b| b.raw_feature() == key)
                .map(|b| b.variable())
                .ok_or_else(|| Error::query(format!("substitution on unknown variable `{key}`")))?,
        };
        if value.is_empty() {
            return Ok(Substitution::unset(variable));
        }
        let index = self.tree.schema().index_of(variable).unwrap();
        let is_term = self.tree.schema().get(index).value_index(value).is_some();
        if self.spec.binding(variable).is_some() && !(is_term && variable == key) {
            if let Ok(x) = value.parse::<f64>() {
                return Ok(Substitution::raw(variable, x));
            }
        }
        if variable != key {
            return Err(Error::query(format!("`{key}` needs a number, got `{value}`")));
        }
        let level = self.spec.variables[index]
            .recode
            .get(value)
            .map(String::as_str)
            .unwrap_or(value);
        Ok(Substitution::value(variable, level))
    }

    fn sort_statements(&self, query: &mut PatientQuery) {
        let schema = self.tree.schema();
        query
            .statements
            .sort_by_key(|s| schema.index_of(&s.variable).unwrap_or(usize::MAX));
    }

    /// Positive-class probability for every record, by query.
    pub fn score(&self, records: &[Record], weighting: Weighting) -> Result<Vec<f64>> {
        records
            .iter()
            .map(|r| {
                let query = self.query_for_record(r);
                self.predict_with(&query, weighting).map(|p| p.probability)
            })
            .collect()
    }

    /// Term degrees for a raw value of a fuzzy-bound variable.
    pub fn degrees(
        &self,
        variable: &str,
        x: f64,
        context: &BTreeMap<String, String>,
    ) -> Result<Vec<(String, f64)>> {
        let binding = self
            .tree
            .binding(variable)
            .ok_or_else(|| Error::query(format!("`{variable}` has no fuzzy sets")))?;
        binding.resolve(context)?.term_degrees(x)
    }
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{
  "variables": [
    { "name": "Grade", "values": ["low", "high"], "recode": { "L": "low", "H": "high" } },
    { "name": "Big" }
  ],
  "fuzzy": [
    {
      "variable": "Big",
      "raw_feature": "size",
      "terms": [
        { "label": "0", "complement_of": "1" },
        { "label": "1", "shape": "rect-trapezoid", "params": [10, 20] }
      ],
      "crisp": { "cut": 20 }
    }
  ],
  "class": { "column": "outcome" }
}"#;

    fn model() -> Model {
        let spec = ModelSpec::from_json(SPEC).unwrap();
        let csv = "Grade,size,outcome\nL,5,0\nL,25,1\nH,30,1\nH,2,0\nH,22,1\nL,,0\n";
        let (data, report) = ingest::read_dataset(csv.as_bytes(), &spec).unwrap();
        assert_eq!(report.rows_flagged, 1);
        Model::fit(spec, &data.records).unwrap()
    }

    #[test]
    fn fits_on_complete_rows() {
        assert_eq!(model().tree().training_rows(), 5);
    }

    #[test]
    fn pairs_and_json_agree() {
        let m = model();
        let a = m.query_from_pairs([("size", "18"), ("Grade", "H")]).unwrap();
        let b = m
            .query_from_json(&serde_json::json!({ "Grade": "H", "Big": 18 }))
            .unwrap();
        let c = m
            .query_from_json(&serde_json::json!({
                "statements": { "Grade": "H" },
                "raw_values": { "Big": 18.0 }
            }))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.statements, vec![Statement::new("Grade", "high")]);
        assert!(m.query_from_pairs([("weight", "3")]).is_err());
        assert!(m.query_from_pairs([("class", "2")]).is_err());
        // a term label names the term, other numbers are measurements
        let t = m.query_from_pairs([("Big", "1")]).unwrap();
        assert_eq!(t.statements, vec![Statement::new("Big", "1")]);
        assert!(t.raw_values.is_empty());
        let r = m.query_from_pairs([("size", "1")]).unwrap();
        assert_eq!(r.raw_values.get("Big"), Some(&1.0));
    }

    #[test]
    fn record_queries_skip_missing_cells() {
        let m = model();
        let record = Record {
            id: None,
            line: 7,
            cells: vec![Some(Cell::level("low")), None],
            context: BTreeMap::new(),
            label: 0,
        };
        let q = m.query_for_record(&record);
        assert_eq!(q.statements, vec![Statement::new("Grade", "low")]);
        assert!(q.raw_values.is_empty());
        // Big absent: uniform over both children of Grade=low
        let p = m.predict(&q).unwrap().probability;
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn substitutions_accept_raw_feature_names() {
        let m = model();
        assert_eq!(m.substitution("size", "25").unwrap(), Substitution::raw("Big", 25.0));
        assert_eq!(m.substitution("Big", "1").unwrap(), Substitution::value("Big", "1"));
        assert_eq!(m.substitution("Big", "12").unwrap(), Substitution::raw("Big", 12.0));
        assert_eq!(m.substitution("size", "1").unwrap(), Substitution::raw("Big", 1.0));
        assert_eq!(m.substitution("Grade", "H").unwrap(), Substitution::value("Grade", "high"));
        assert_eq!(m.substitution("Grade", "").unwrap(), Substitution::unset("Grade"));
        assert!(m.substitution("size", "large").is_err());
        assert!(m.substitution("weight", "3").is_err());
    }
}
