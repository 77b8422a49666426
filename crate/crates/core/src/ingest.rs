//! Model specifications and CSV patient data.
//!
//! A spec is a JSON document:
//!
//! ```json
//! {
//!   "name": "thyroid",
//!   "variables": [
//!     { "name": "TIRADS", "values": ["TIR2", "TIR3A"], "recode": { "2": "TIR2" } },
//!     { "name": "LargeNodule" }
//!   ],
//!   "fuzzy": [
//!     { "variable": "LargeNodule", "raw_feature": "NoduleSize",
//!       "terms": [ { "label": "0", "complement_of": "1" },
//!                  { "label": "1", "shape": "rect-trapezoid", "params": [10, 20] } ],
//!       "crisp": { "cut": 20 } }
//!   ],
//!   "class": { "column": "Malignant", "positive": "1", "negative": "0" },
//!   "threshold": 0.5,
//!   "exclusions": [ { "rule": "duplicate", "column": "PatientID" } ],
//!   "mapping": { "NoduleSize": "nodule_mm" }
//! }
//! ```
//!
//! Variables are listed in tree order. Fuzzy-bound variables take their
//! values from their term labels and are read from the raw-feature column.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset, Record};
use crate::error::{Error, Result};
use crate::fuzzy::FuzzyBinding;
use crate::tree::{Schema, SchemaVariable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    /// Declared levels. Empty for fuzzy-bound variables, which use their terms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Raw cell text to declared level.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub column: String,
    #[serde(default = "default_positive")]
    pub positive: String,
    #[serde(default = "default_negative")]
    pub negative: String,
}

fn default_positive() -> String {
    "1".into()
}

fn default_negative() -> String {
    "0".into()
}

fn default_threshold() -> f64 {
    0.5
}

/// A user-declared exclusion predicate. Rules run in declared order and each
/// row is counted under the first rule that excludes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExclusionRule {
    /// Rows with an empty cell in any of `columns` (all tree columns when empty).
    MissingRequired {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        columns: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Rows repeating an earlier row's value in `column`; the first is kept.
    Duplicate {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Rows whose numeric `column` is non-numeric or outside `[min, max]`.
    Range {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Rows whose `column` equals `value`.
    Equals {
        column: String,
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl ExclusionRule {
    pub fn name(&self) -> &str {
        match self {
            ExclusionRule::MissingRequired { name, .. } => name.as_deref().unwrap_or("missing-required"),
            ExclusionRule::Duplicate { name, .. } => name.as_deref().unwrap_or("duplicate"),
            ExclusionRule::Range { name, .. } => name.as_deref().unwrap_or("range"),
            ExclusionRule::Equals { name, .. } => name.as_deref().unwrap_or("equals"),
        }
    }
}

pub const MALFORMED: &str = "malformed";
pub const OUT_OF_RANGE: &str = "out-of-range";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub fuzzy: Vec<FuzzyBinding>,
    pub class: ClassSpec,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub smoothing: f64,
    #[serde(default)]
    pub exclusions: Vec<ExclusionRule>,
    /// Logical column name to CSV header.
    #[serde(default)]
    pub mapping: BTreeMap<String, String>,
}

/// First-pass shape of the document: fuzzy bindings stay as JSON so their
/// errors can name the variable.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    id_column: Option<String>,
    variables: Vec<VariableSpec>,
    #[serde(default)]
    fuzzy: Vec<serde_json::Value>,
    class: ClassSpec,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    smoothing: f64,
    #[serde(default)]
    exclusions: Vec<ExclusionRule>,
    #[serde(default)]
    mapping: BTreeMap<String, String>,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDocument = serde_json::from_str(text).map_err(|e| Error::Spec {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let mut fuzzy = Vec::with_capacity(doc.fuzzy.len());
        for value in doc.fuzzy {
            let variable = value
                .get("variable")
                .and_then(|v| v.as_str())
                .unwrap_or("?")
                .to_string();
            let binding: FuzzyBinding = serde_json::from_value(value).map_err(|e| Error::Spec {
                line: locate(text, Some("\"fuzzy\""), &variable),
                message: format!("fuzzy binding `{variable}`: {e}"),
            })?;
            fuzzy.push(binding);
        }
        let mut spec = ModelSpec {
            name: doc.name,
            description: doc.description,
            id_column: doc.id_column,
            variables: doc.variables,
            fuzzy,
            class: doc.class,
            threshold: doc.threshold,
            smoothing: doc.smoothing,
            exclusions: doc.exclusions,
            mapping: doc.mapping,
        };
        spec.validate(Some(text))?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Checks every invariant and fills fuzzy-bound variables' values from
    /// their terms. `text` is the source, used to report line numbers.
    pub fn validate(&mut self, text: Option<&str>) -> Result<()> {
        let at = |needle: &str| text.and_then(|t| locate(t, None, needle));
        let fail = |line: Option<usize>, message: String| Err(Error::Spec { line, message });

        let mut seen = HashSet::new();
        for var in &self.variables {
            if var.name.trim().is_empty() {
                return fail(None, "variable names must be non-empty".into());
            }
            if !seen.insert(var.name.as_str()) {
                let line = text.and_then(|t| locate_nth(t, &var.name, 2));
                return fail(line, format!("duplicate variable `{}`", var.name));
            }
        }

        let mut bound = HashSet::new();
        for binding in &self.fuzzy {
            let name = binding.variable();
            let line = text.and_then(|t| locate(t, Some("\"fuzzy\""), name));
            let Some(var) = self.variables.iter_mut().find(|v| v.name == name) else {
                return fail(line, format!("fuzzy binding for undeclared variable `{name}`"));
            };
            if !bound.insert(name.to_string()) {
                return fail(line, format!("variable `{name}` has two fuzzy bindings"));
            }
            let terms = binding.term_labels();
            if var.values.is_empty() {
                var.values = terms;
            } else if var.values != terms {
                return fail(
                    at(name),
                    format!("values of `{name}` must be its fuzzy terms {terms:?} in order"),
                );
            }
            if !var.recode.is_empty() {
                return fail(at(name), format!("fuzzy-bound variable `{name}` cannot be recoded"));
            }
        }

        for var in &self.variables {
            if var.values.is_empty() {
                return fail(at(&var.name), format!("variable `{}` declares no values", var.name));
            }
            let unique: BTreeSet<_> = var.values.iter().collect();
            if unique.len() != var.values.len() {
                return fail(at(&var.name), format!("variable `{}` repeats a value", var.name));
            }
            if let Some((raw, level)) = var.recode.iter().find(|(_, l)| !var.values.contains(l)) {
                return fail(
                    at(&var.name),
                    format!("`{}` recodes `{raw}` to undeclared value `{level}`", var.name),
                );
            }
        }

        if self.class.positive == self.class.negative {
            return fail(at("class"), "class labels must be two distinct values".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(
                at("threshold"),
                format!("threshold must lie strictly between 0 and 1, got {}", self.threshold),
            );
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return fail(
                at("smoothing"),
                format!("smoothing must be a non-negative number, got {}", self.smoothing),
            );
        }
        for rule in &self.exclusions {
            if let ExclusionRule::Range { column, min: Some(lo), max: Some(hi), .. } = rule {
                if lo > hi {
                    return fail(at(column), format!("range rule on `{column}` has min above max"));
                }
            }
        }
        // Building the schema checks the rest.
        self.schema().map_err(|e| Error::Spec {
            line: None,
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::new(
            self.variables
                .iter()
                .map(|v| SchemaVariable::new(&v.name, v.values.iter().cloned()))
                .collect(),
        )
    }

    pub fn bindings(&self) -> BTreeMap<String, FuzzyBinding> {
        self.fuzzy
            .iter()
            .map(|b| (b.variable().to_string(), b.clone()))
            .collect()
    }

    pub fn binding(&self, variable: &str) -> Option<&FuzzyBinding> {
        self.fuzzy.iter().find(|b| b.variable() == variable)
    }

    /// CSV header for a logical column name.
    pub fn column<'a>(&'a self, logical: &'a str) -> &'a str {
        self.mapping.get(logical).map(String::as_str).unwrap_or(logical)
    }

    /// Logical column holding a variable's data: the raw feature for
    /// fuzzy-bound variables, the variable name otherwise.
    pub fn source_of<'a>(&'a self, variable: &'a str) -> &'a str {
        self.binding(variable).map(|b| b.raw_feature()).unwrap_or(variable)
    }

    /// Non-tree columns read into each record's context.
    pub fn context_columns(&self) -> Vec<String> {
        let columns: BTreeSet<String> = self
            .fuzzy
            .iter()
            .filter_map(|b| b.selector().map(|s| s.column.clone()))
            .collect();
        columns.into_iter().collect()
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

/// 1-based line of the first quoted occurrence of `needle`, searching after
/// `anchor` when given.
fn locate(text: &str, anchor: Option<&str>, needle: &str) -> Option<usize> {
    let start = match anchor {
        Some(a) => text.find(a)?,
        None => 0,
    };
    let quoted = format!("\"{needle}\"");
    let offset = start + text[start..].find(&quoted)?;
    Some(line_of(text, offset))
}

fn locate_nth(text: &str, needle: &str, nth: usize) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    let (offset, _) = text.match_indices(&quoted).nth(nth - 1)?;
    Some(line_of(text, offset))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].matches('\n').count() + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCount {
    pub rule: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub line: usize,
    pub rule: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_retained: usize,
    /// Retained rows with a missing optional value.
    pub rows_flagged: usize,
    /// Per-rule counts in the order rules were applied; rules that excluded
    /// nothing are omitted.
    pub exclusions: Vec<ExclusionCount>,
    pub excluded_rows: Vec<ExcludedRow>,
}

impl IngestReport {
    pub fn excluded(&self) -> usize {
        self.exclusions.iter().map(|e| e.count).sum()
    }

    pub fn count(&self, rule: &str) -> usize {
        self.exclusions
            .iter()
            .find(|e| e.rule == rule)
            .map_or(0, |e| e.count)
    }
}

pub fn load_dataset(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<(Dataset, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, spec)
}

struct Columns {
    id: Option<usize>,
    class: usize,
    variables: Vec<usize>,
    context: Vec<(String, usize)>,
}

pub fn read_dataset<R: Read>(reader: R, spec: &ModelSpec) -> Result<(Dataset, IngestReport)> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |logical: &str| -> Result<usize> {
        let header = spec.column(logical);
        headers
            .iter()
            .position(|h| h == header)
            .ok_or_else(|| Error::MissingColumn(header.to_string()))
    };
    let columns = Columns {
        id: spec.id_column.as_deref().map(find).transpose()?,
        class: find(&spec.class.column)?,
        variables: spec
            .variables
            .iter()
            .map(|v| find(spec.source_of(&v.name)))
            .collect::<Result<_>>()?,
        context: spec
            .context_columns()
            .into_iter()
            .map(|c| find(&c).map(|i| (c, i)))
            .collect::<Result<_>>()?,
    };
    let rule_columns: Vec<Vec<usize>> = spec
        .exclusions
        .iter()
        .map(|rule| match rule {
            ExclusionRule::MissingRequired { columns: cs, .. } if cs.is_empty() => {
                Ok(columns.variables.clone())
            }
            ExclusionRule::MissingRequired { columns: cs, .. } => {
                cs.iter().map(|c| find(spec.source_of(c))).collect()
            }
            ExclusionRule::Duplicate { column, .. }
            | ExclusionRule::Range { column, .. }
            | ExclusionRule::Equals { column, .. } => find(spec.source_of(column)).map(|i| vec![i]),
        })
        .collect::<Result<_>>()?;

    let schema = spec.schema()?;
    let bindings = spec.bindings();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut seen: Vec<HashSet<String>> = vec![HashSet::new(); spec.exclusions.len()];

    for (index, row) in csv.records().enumerate() {
        // the header is line 1
        let line = index + 2;
        report.rows_read += 1;
        let outcome = row
            .map_err(|e| (MALFORMED.to_string(), e.to_string()))
            .and_then(|row| {
                if row.len() != headers.len() {
                    return Err((
                        MALFORMED.to_string(),
                        format!("expected {} fields, found {}", headers.len(), row.len()),
                    ));
                }
                let label = parse_label(spec, &row[columns.class])
                    .map_err(|reason| (MALFORMED.to_string(), reason))?;
                for (rule, (cols, seen)) in spec
                    .exclusions
                    .iter()
                    .zip(rule_columns.iter().zip(seen.iter_mut()))
                {
                    if let Some(reason) = apply_rule(rule, cols, &row, seen) {
                        return Err((rule.name().to_string(), reason));
                    }
                }
                build_record(spec, &schema, &bindings, &columns, &row, line, label)
                    .map_err(|reason| (OUT_OF_RANGE.to_string(), reason))
            });
        match outcome {
            Ok(record) => {
                if record.is_flagged() {
                    report.rows_flagged += 1;
                }
                records.push(record);
            }
            Err((rule, reason)) => {
                *counts.entry(rule.clone()).or_default() += 1;
                report.excluded_rows.push(ExcludedRow { line, rule, reason });
            }
        }
    }

    let order = std::iter::once(MALFORMED)
        .chain(spec.exclusions.iter().map(ExclusionRule::name))
        .chain(std::iter::once(OUT_OF_RANGE));
    let mut listed = HashSet::new();
    for rule in order {
        if let Some(&count) = counts.get(rule) {
            if listed.insert(rule) {
                report.exclusions.push(ExclusionCount { rule: rule.to_string(), count });
            }
        }
    }
    report.rows_retained = records.len();
    log::info!(
        "read {} rows, retained {}, excluded {}",
        report.rows_read,
        report.rows_retained,
        report.excluded()
    );
    Ok((
        Dataset {
            variables: spec.variable_names(),
            records,
        },
        report,
    ))
}

fn parse_label(spec: &ModelSpec, text: &str) -> std::result::Result<u8, String> {
    if text == spec.class.positive {
        Ok(1)
    } else if text == spec.class.negative {
        Ok(0)
    } else if text.is_empty() {
        Err(format!("missing class label in `{}`", spec.class.column))
    } else {
        Err(format!(
            "class label `{text}` is neither `{}` nor `{}`",
            spec.class.positive, spec.class.negative
        ))
    }
}

fn apply_rule(
    rule: &ExclusionRule,
    columns: &[usize],
    row: &csv::StringRecord,
    seen: &mut HashSet<String>,
) -> Option<String> {
    match rule {
        ExclusionRule::MissingRequired { .. } => columns
            .iter()
            .find(|&&c| row[c].is_empty())
            .map(|&c| format!("missing value in column {}", c + 1)),
        ExclusionRule::Duplicate { column, .. } => {
            let value = &row[columns[0]];
            (!value.is_empty() && !seen.insert(value.to_string()))
                .then(|| format!("duplicate `{column}` value `{value}`"))
        }
        ExclusionRule::Range { column, min, max, .. } => {
            let text = &row[columns[0]];
            if text.is_empty() {
                return None;
            }
            match text.parse::<f64>() {
                Ok(x) if x.is_finite() && min.is_none_or(|m| x >= m) && max.is_none_or(|m| x <= m) => None,
                Ok(x) => Some(format!("`{column}` value {x} outside the allowed range")),
                Err(_) => Some(format!("`{column}` value `{text}` is not numeric")),
            }
        }
        ExclusionRule::Equals { column, value, .. } => {
            (&row[columns[0]] == value).then(|| format!("`{column}` equals `{value}`"))
        }
    }
}

fn build_record(
    spec: &ModelSpec,
    schema: &Schema,
    bindings: &BTreeMap<String, FuzzyBinding>,
    columns: &Columns,
    row: &csv::StringRecord,
    line: usize,
    label: u8,
) -> std::result::Result<Record, String> {
    let context: BTreeMap<String, String> = columns
        .context
        .iter()
        .filter(|(_, i)| !row[*i].is_empty())
        .map(|(name, i)| (name.clone(), row[*i].to_string()))
        .collect();
    let mut cells = Vec::with_capacity(schema.len());
    for ((var, spec_var), &col) in schema
        .variables()
        .iter()
        .zip(&spec.variables)
        .zip(&columns.variables)
    {
        let text = &row[col];
        if text.is_empty() {
            cells.push(None);
            continue;
        }
        let cell = match bindings.get(&var.name) {
            Some(binding) => match text.parse::<f64>() {
                Ok(x) if x.is_finite() => {
                    binding
                        .resolve(&context)
                        .map_err(|e| format!("`{}`: {e}", var.name))?;
                    Cell::Number(x)
                }
                Ok(x) => return Err(format!("`{}` value {x} is not finite", var.name)),
                Err(_) if var.value_index(text).is_some() => Cell::level(text),
                Err(_) => {
                    return Err(format!(
                        "`{}` value `{text}` is neither numeric nor a term",
                        var.name
                    ))
                }
            },
            None => {
                let level = spec_var.recode.get(text).map(String::as_str).unwrap_or(text);
                if var.value_index(level).is_none() {
                    return Err(format!(
                        "`{}` value `{text}` is not one of {:?}",
                        var.name, var.values
                    ));
                }
                Cell::level(level)
            }
        };
        cells.push(Some(cell));
    }
    Ok(Record {
        id: columns.id.map(|i| row[i].to_string()),
        line,
        cells,
        context,
        label,
    })
}

/// Writes records as CSV using the spec's column layout, so the output reads
/// back with [`read_dataset`].
pub fn write_dataset<W: Write>(writer: W, spec: &ModelSpec, records: &[Record]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = &spec.id_column {
        header.push(spec.column(id));
    }
    for var in &spec.variables {
        header.push(spec.column(spec.source_of(&var.name)));
    }
    let context = spec.context_columns();
    for c in &context {
        header.push(spec.column(c));
    }
    header.push(spec.column(&spec.class.column));
    csv.write_record(&header)?;
    for (i, record) in records.iter().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        if spec.id_column.is_some() {
            fields.push(record.id.clone().unwrap_or_else(|| (i + 1).to_string()));
        }
        for cell in &record.cells {
            fields.push(cell.as_ref().map(ToString::to_string).unwrap_or_default());
        }
        for c in &context {
            fields.push(record.context.get(c).cloned().unwrap_or_default());
        }
        fields.push(if record.label == 1 {
            spec.class.positive.clone()
        } else {
            spec.class.negative.clone()
        });
        csv.write_record(&fields)?;
    }
    csv.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
