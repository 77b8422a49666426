//! Synthetic patient cohorts for experiments without clinical data.
//!
//! ```json
//! {
//!   "id_column": "PatientID",
//!   "columns": [
//!     { "name": "TIRADS", "levels": { "TIR2": 0.5, "TIR4": 0.3, "TIR5": 0.2 } },
//!     { "name": "NoduleSize", "uniform": { "low": 2, "high": 40 }, "decimals": 1 },
//!     { "name": "Age", "normal": { "mean": 55, "sd": 14 }, "min": 18, "max": 95, "decimals": 0 }
//!   ],
//!   "class": {
//!     "column": "Malignant",
//!     "intercept": -4,
//!     "terms": [
//!       { "column": "TIRADS", "equals": "TIR5", "weight": 5 },
//!       { "column": "NoduleSize", "ramp": [10, 20], "weight": 4 }
//!     ],
//!     "noise": "bernoulli"
//!   }
//! }
//! ```
//!
//! The class score is `intercept + sum(weight * feature)`, where a feature is
//! an equality indicator, a threshold indicator (`above`) or a linear ramp
//! from 0 to 1. With `"noise": "none"` the label is `score >= 0`; with
//! `"bernoulli"` it is drawn with probability `1 / (1 + exp(-score))`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ingest::{self, IngestReport, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    /// Categorical: level to relative weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<UniformParams>,
    /// Clamp for numeric columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimals: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTerm {
    pub column: String,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub above: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    None,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRule {
    pub column: String,
    #[serde(default = "one")]
    pub positive: String,
    #[serde(default = "zero")]
    pub negative: String,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<RuleTerm>,
    #[serde(default)]
    pub noise: Noise,
}

fn one() -> String {
    "1".into()
}

fn zero() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub columns: Vec<ColumnSpec>,
    pub class: ClassRule,
}

impl CohortSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CohortSpec = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cohort spec line {}: {e}", e.line())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return fail(format!("duplicate cohort column `{}`", c.name));
            }
            let kinds = [c.levels.is_some(), c.normal.is_some(), c.uniform.is_some()];
            if kinds.iter().filter(|k| **k).count() != 1 {
                return fail(format!(
                    "column `{}` needs exactly one of levels, normal, uniform",
                    c.name
                ));
            }
            if let Some(levels) = &c.levels {
                if levels.is_empty()
                    || levels.values().any(|w| !(w.is_finite() && *w >= 0.0))
                    || levels.values().sum::<f64>() <= 0.0
                {
                    return fail(format!(
                        "column `{}` needs non-negative level weights with a positive sum",
                        c.name
                    ));
                }
            }
            if let Some(n) = c.normal {
                if !(n.mean.is_finite() && n.sd.is_finite() && n.sd > 0.0) {
                    return fail(format!("column `{}` needs a finite mean and positive sd", c.name));
                }
            }
            if let Some(u) = c.uniform {
                if !(u.low.is_finite() && u.high.is_finite() && u.low < u.high) {
                    return fail(format!("column `{}` needs low < high", c.name));
                }
            }
            if let (Some(lo), Some(hi)) = (c.min, c.max) {
                if lo > hi {
                    return fail(format!("column `{}` has min above max", c.name));
                }
            }
        }
        if self.class.positive == self.class.negative {
            return fail("class labels must differ".into());
        }
        if !self.class.intercept.is_finite() {
            return fail("intercept must be finite".into());
        }
        for t in &self.class.terms {
            let Some(column) = self.columns.iter().find(|c| c.name == t.column) else {
                return fail(format!("class rule refers to unknown column `{}`", t.column));
            };
            let kinds = [t.equals.is_some(), t.above.is_some(), t.ramp.is_some()];
            if kinds.iter().filter(|k| **k).count() != 1 {
                return fail(format!(
                    "rule term on `{}` needs exactly one of equals, above, ramp",
                    t.column
                ));
            }
            if (t.above.is_some() || t.ramp.is_some()) && column.levels.is_some() {
                return fail(format!("rule term on categorical `{}` must use equals", t.column));
            }
            if let Some((lo, hi)) = t.ramp {
                if !(lo < hi) {
                    return fail(format!("ramp on `{}` needs low < high", t.column));
                }
            }
            if !t.weight.is_finite() {
                return fail(format!("weight on `{}` must be finite", t.column));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Level(String),
    Number(f64),
}

impl Value {
    fn render(&self, decimals: Option<u32>) -> String {
        match (self, decimals) {
            (Value::Level(s), _) => s.clone(),
            (Value::Number(x), Some(d)) => format!("{x:.*}", d as usize),
            (Value::Number(x), None) => x.to_string(),
        }
    }
}

/// Generated rows, as text cells in column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub labels: Vec<u8>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush().map_err(|e| Error::Config(format!("writing cohort: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv is utf-8")
    }

    /// Reads the cohort through a model spec, exactly as a CSV file would be.
    pub fn to_dataset(&self, spec: &ModelSpec) -> Result<(Dataset, IngestReport)> {
        ingest::read_dataset(self.to_csv_string().as_bytes(), spec)
    }
}

/// Draws `n` rows; deterministic given `seed`.
pub fn generate_cohort(spec: &CohortSpec, n: usize, seed: u64) -> Result<Cohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header: Vec<String> = Vec::new();
    if let Some(id) = &spec.id_column {
        header.push(id.clone());
    }
    header.extend(spec.columns.iter().map(|c| c.name.clone()));
    header.push(spec.class.column.clone());

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let values: Vec<Value> = spec.columns.iter().map(|c| draw(c, &mut rng)).collect();
        let score = spec.class.intercept
            + spec
                .class
                .terms
                .iter()
                .map(|t| {
                    let index = spec.columns.iter().position(|c| c.name == t.column).expect("validated");
                    t.weight * feature(t, &values[index], spec.columns[index].decimals)
                })
                .sum::<f64>();
        let label = match spec.class.noise {
            Noise::None => u8::from(score >= 0.0),
            Noise::Bernoulli => u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-score).exp())),
        };
        let mut row = Vec::with_capacity(header.len());
        if spec.id_column.is_some() {
            row.push((i + 1).to_string());
        }
        row.extend(
            values
                .iter()
                .zip(&spec.columns)
                .map(|(v, c)| v.render(c.decimals)),
        );
        row.push(if label == 1 {
            spec.class.positive.clone()
        } else {
            spec.class.negative.clone()
        });
        rows.push(row);
        labels.push(label);
    }
    Ok(Cohort {
        header,
        rows,
        labels,
    })
}

fn draw(column: &ColumnSpec, rng: &mut ChaCha8Rng) -> Value {
    if let Some(levels) = &column.levels {
        let total: f64 = levels.values().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for (level, w) in levels {
            if *w > 0.0 {
                last = Some(level);
                if u < *w {
                    return Value::Level(level.clone());
                }
                u -= w;
            }
        }
        return Value::Level(last.expect("positive total weight").clone());
    }
    let mut x = if let Some(n) = column.normal {
        Normal::new(n.mean, n.sd).expect("validated").sample(rng)
    } else {
        let u = column.uniform.expect("validated");
        rng.random_range(u.low..u.high)
    };
    if let Some(lo) = column.min {
        x = x.max(lo);
    }
    if let Some(hi) = column.max {
        x = x.min(hi);
    }
    if let Some(d) = column.decimals {
        let scale = 10f64.powi(d as i32);
        x = (x * scale).round() / scale;
    }
    Value::Number(x)
}

fn feature(term: &RuleTerm, value: &Value, decimals: Option<u32>) -> f64 {
    match value {
        Value::Level(level) => match &term.equals {
            Some(target) => f64::from(u8::from(level == target)),
            None => 0.0,
        },
        Value::Number(x) => {
            if let Some(target) = &term.equals {
                f64::from(u8::from(&value.render(decimals) == target))
            } else if let Some(cut) = term.above {
                f64::from(u8::from(*x >= cut))
            } else if let Some((lo, hi)) = term.ramp {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
    }
}
