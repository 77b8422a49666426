//! Thresholded classification and what-if comparisons.
//!
//! A counterfactual here is substitution plus re-prediction: the query's
//! statements or raw values are replaced and the tree is queried again. No
//! abduction over an observed outcome takes place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{predict, PatientQuery, Prediction};
use crate::tree::{ProbabilityTree, Statement};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Probability of the positive class.
    pub probability: f64,
    /// Probability of the negative class.
    pub complement: f64,
    pub threshold: f64,
    pub label: u8,
    #[serde(default)]
    pub statements: Vec<Statement>,
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "threshold must lie strictly between 0 and 1, got {threshold}"
        )))
    }
}

/// Label 1 iff `p >= threshold`.
pub fn classify(p: f64, threshold: f64) -> Result<Decision> {
    check_threshold(threshold)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(Decision {
        probability: p,
        complement: 1.0 - p,
        threshold,
        label: u8::from(p >= threshold),
        statements: Vec::new(),
    })
}

/// Predicts the positive class for `query` and thresholds it. The query's
/// own class field is ignored.
pub fn decide(tree: &ProbabilityTree, query: &PatientQuery, threshold: f64) -> Result<Decision> {
    decide_with_prediction(tree, query, threshold).map(|(d, _)| d)
}

pub fn decide_with_prediction(
    tree: &ProbabilityTree,
    query: &PatientQuery,
    threshold: f64,
) -> Result<(Decision, Prediction)> {
    check_threshold(threshold)?;
    let positive = PatientQuery {
        class: 1,
        ..query.clone()
    };
    let prediction = predict(tree, &positive)?;
    let mut decision = classify(prediction.probability, threshold)?;
    decision.statements = positive.normalized(tree)?.statements;
    Ok((decision, prediction))
}

/// What a substitution sets a variable to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Value(String),
    Raw(f64),
}

/// Replace one variable's statement or raw value. Giving neither `value`
/// nor `raw` removes the variable from the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Substitution {
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
}

impl Substitution {
    pub fn value(variable: impl Into<String>, value: impl Into<String>) -> Self {
        Substitution {
            variable: variable.into(),
            value: Some(value.into()),
            raw: None,
        }
    }

    pub fn raw(variable: impl Into<String>, raw: f64) -> Self {
        Substitution {
            variable: variable.into(),
            value: None,
            raw: Some(raw),
        }
    }

    pub fn unset(variable: impl Into<String>) -> Self {
        Substitution {
            variable: variable.into(),
            value: None,
            raw: None,
        }
    }

    /// Parses `Variable=value`; numbers for fuzzy-bound variables become raw
    /// values, an empty right-hand side unsets.
    pub fn parse(tree: &ProbabilityTree, text: &str) -> Result<Self> {
        let (variable, value) = text
            .split_once('=')
            .ok_or_else(|| Error::query(format!("substitution `{text}` is not variable=value")))?;
        let (variable, value) = (variable.trim(), value.trim());
        if value.is_empty() {
            return Ok(Substitution::unset(variable));
        }
        if tree.binding(variable).is_some() {
            if let Ok(x) = value.parse::<f64>() {
                return Ok(Substitution::raw(variable, x));
            }
        }
        Ok(Substitution::value(variable, value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedSubstitution {
    pub variable: String,
    pub old: Option<Setting>,
    pub new: Option<Setting>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub factual: Decision,
    pub counterfactual: Decision,
    pub substitutions: Vec<AppliedSubstitution>,
    /// Counterfactual minus factual positive-class probability.
    pub delta: f64,
}

fn setting_of(query: &PatientQuery, variable: &str) -> Option<Setting> {
    if let Some(x) = query.raw_values.get(variable) {
        return Some(Setting::Raw(*x));
    }
    query
        .statements
        .iter()
        .find(|s| s.variable == variable)
        .map(|s| Setting::Value(s.value.clone()))
}

/// Applies substitutions in order and reports what changed.
pub fn apply_substitutions(
    tree: &ProbabilityTree,
    query: &PatientQuery,
    substitutions: &[Substitution],
) -> Result<(PatientQuery, Vec<AppliedSubstitution>)> {
    let schema = tree.schema();
    let mut out = query.clone();
    let mut applied = Vec::with_capacity(substitutions.len());
    for sub in substitutions {
        let name = sub.variable.as_str();
        if schema.index_of(name).is_none() {
            return Err(Error::query(format!("substitution on unknown variable `{name}`")));
        }
        let old = setting_of(&out, name);
        let new = match (&sub.value, sub.raw) {
            (Some(_), Some(_)) => {
                return Err(Error::query(format!(
                    "substitution on `{name}` gives both a value and a raw measurement"
                )))
            }
            (None, Some(x)) => {
                if !x.is_finite() {
                    return Err(Error::query(format!("raw value for `{name}` must be finite, got {x}")));
                }
                if tree.binding(name).is_none() {
                    return Err(Error::query(format!(
                        "raw value given for `{name}`, which has no fuzzy sets"
                    )));
                }
                Some(Setting::Raw(x))
            }
            (Some(v), None) => Some(Setting::Value(v.clone())),
            (None, None) => None,
        };
        out.statements.retain(|s| s.variable != name);
        out.raw_values.remove(name);
        match &new {
            Some(Setting::Raw(x)) => {
                out.raw_values.insert(name.to_string(), *x);
            }
            Some(Setting::Value(v)) => out.statements.push(Statement::new(name, v)),
            None => {}
        }
        applied.push(AppliedSubstitution {
            variable: name.to_string(),
            old,
            new,
        });
    }
    out.statements
        .sort_by_key(|s| schema.index_of(&s.variable).unwrap_or(usize::MAX));
    Ok((out, applied))
}

pub fn counterfactual(
    tree: &ProbabilityTree,
    query: &PatientQuery,
    substitutions: &[Substitution],
    threshold: f64,
) -> Result<CounterfactualResult> {
    let factual = decide(tree, query, threshold)?;
    let (altered, applied) = apply_substitutions(tree, query, substitutions)?;
    let counterfactual = decide(tree, &altered, threshold)?;
    Ok(CounterfactualResult {
        delta: counterfactual.probability - factual.probability,
        factual,
        counterfactual,
        substitutions: applied,
    })
}

/// The substitutions that undo `applied`.
pub fn inverse(applied: &[AppliedSubstitution]) -> Vec<Substitution> {
    applied
        .iter()
        .rev()
        .map(|a| match &a.old {
            Some(Setting::Value(v)) => Substitution::value(&a.variable, v),
            Some(Setting::Raw(x)) => Substitution::raw(&a.variable, *x),
            None => Substitution::unset(&a.variable),
        })
        .collect()
}
