use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{Method, StatusCode, Uri};
use fpt_core::decision::{check_threshold, classify};
use fpt_core::evaluation::{
    bootstrap_compare, render_table, BootstrapConfig, Metric, ModelBuilder, TreeBuilder,
};
use fpt_core::fuzzy::LinguisticVariable;
use fpt_core::inference::{BranchStep, Prediction};
use fpt_core::{conditional_probability, Model, PatientQuery, Substitution, Weighting};
use serde_json::{json, Map, Value};

use crate::error::{ApiError, FieldError, Reply};
use crate::session::Session;
use crate::AppState;

type Outcome = Result<(StatusCode, Value), ApiError>;

fn ok(body: Value) -> Outcome {
    Ok((StatusCode::OK, body))
}

fn reply(session: &Session, outcome: Outcome) -> Reply {
    Reply::new(&session.fingerprint, outcome)
}

pub async fn not_found(State(app): State<Arc<AppState>>, method: Method, uri: Uri) -> Reply {
    let session = app.session();
    reply(&session, Err(ApiError::not_found(format!("no route for {method} {}", uri.path()))))
}

pub async fn model(State(app): State<Arc<AppState>>) -> Reply {
    let session = app.session();
    let spec = session.model.spec();
    let tree = session.model.tree();
    let variables: Vec<Value> = tree
        .schema()
        .variables()
        .iter()
        .zip(&spec.variables)
        .map(|(var, declared)| {
            let binding = tree.binding(&var.name);
            json!({
                "name": var.name,
                "values": var.values,
                "fuzzy": binding.is_some(),
                "raw_feature": binding.map(|b| b.raw_feature()),
                "selector": binding.and_then(|b| b.selector()).map(|s| &s.column),
                "recode": declared.recode,
            })
        })
        .collect();
    let body = json!({
        "name": spec.name,
        "description": spec.description,
        "fingerprint": session.fingerprint,
        "started_at": app.started_at(),
        "loaded_at": session.loaded_at,
        "threshold": spec.threshold,
        "class": spec.class,
        "variables": variables,
        "context_columns": spec.context_columns(),
        "stats": session.model.stats(),
        "ingest": {
            "rows_read": session.report.rows_read,
            "rows_retained": session.report.rows_retained,
            "rows_flagged": session.report.rows_flagged,
            "exclusions": session.report.exclusions,
        },
    });
    reply(&session, ok(body))
}

pub async fn tree(State(app): State<Arc<AppState>>) -> Reply {
    let session = app.session();
    let body = serde_json::from_str(&session.model.tree().to_json()).expect("tree JSON parses");
    reply(&session, ok(body))
}

pub async fn fuzzy(
    State(app): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Reply {
    let session = app.session();
    let outcome = fuzzy_curves(&session.model, &name, params);
    reply(&session, outcome)
}

/// Exact variable name first, then a case-insensitive match on the variable
/// or its raw feature, ignoring punctuation.
fn find_binding<'a>(model: &'a Model, name: &str) -> Option<&'a fpt_core::FuzzyBinding> {
    let tree = model.tree();
    if let Some(b) = tree.binding(name) {
        return Some(b);
    }
    let squash = |s: &str| -> String {
        s.chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect()
    };
    let wanted = squash(name);
    tree.bindings()
        .values()
        .find(|b| squash(b.variable()) == wanted || squash(b.raw_feature()) == wanted)
}

fn fuzzy_curves(model: &Model, name: &str, mut params: BTreeMap<String, String>) -> Outcome {
    let binding = find_binding(model, name)
        .ok_or_else(|| ApiError::not_found(format!("no fuzzy variable matches `{name}`")))?;
    let x = match params.remove("x") {
        Some(text) => match text.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            _ => return Err(ApiError::field("x", format!("x must be a finite number, got `{text}`"))),
        },
        None => None,
    };
    let points = match params.remove("points") {
        Some(text) => match text.trim().parse::<usize>() {
            Ok(n) if (2..=10_000).contains(&n) => n,
            _ => return Err(ApiError::field("points", "points must be an integer from 2 to 10000")),
        },
        None => 200,
    };
    // what is left is patient context, e.g. Sex=F for a selector
    let context = params;
    let mut cases: Vec<(Option<String>, &LinguisticVariable)> = Vec::new();
    match binding.selector() {
        Some(selector) => {
            let chosen = context.get(&selector.column);
            for (case, lv) in &selector.cases {
                if chosen.is_none_or(|c| c == case) {
                    cases.push((Some(case.clone()), lv));
                }
            }
            if cases.is_empty() {
                if let Some(lv) = binding.default_variable() {
                    cases.push((None, lv));
                } else {
                    return Err(ApiError::field(
                        &selector.column,
                        format!("no fuzzy sets for {} = `{}`", selector.column, chosen.unwrap()),
                    ));
                }
            }
        }
        None => cases.push((None, binding.default_variable().expect("unselected binding"))),
    }
    let mut curves = Vec::new();
    let mut at = Vec::new();
    for (case, lv) in cases {
        let sampled = lv.sample(points).map_err(ApiError::from)?;
        curves.push(json!({
            "case": case,
            "support": lv.support(),
            "crisp_cut": lv.crisp_cut(),
            "positive_term": lv.positive_term(),
            "x": sampled.x,
            "terms": sampled.terms,
        }));
        if let Some(x) = x {
            let degrees: Map<String, Value> = lv
                .term_degrees(x)
                .map_err(ApiError::from)?
                .into_iter()
                .map(|(label, d)| (label, json!(d)))
                .collect();
            at.push(json!({
                "case": case,
                "x": x,
                "degrees": degrees,
                "crisp": lv.crisp_project(x).map_err(ApiError::from)?,
            }));
        }
    }
    let mut body = json!({
        "variable": binding.variable(),
        "raw_feature": binding.raw_feature(),
        "terms": binding.term_labels(),
        "selector": binding.selector().map(|s| &s.column),
        "curves": curves,
    });
    if x.is_some() {
        body["at"] = Value::Array(at);
    }
    ok(body)
}

fn parse_object(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Map::new());
    }
    match serde_json::from_slice(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::field("body", "request body must be a JSON object")),
        Err(e) => Err(ApiError::field("body", format!("malformed JSON: {e}"))),
    }
}

fn take_threshold(map: &mut Map<String, Value>, default: f64) -> Result<f64, ApiError> {
    match map.remove("threshold") {
        None | Some(Value::Null) => Ok(default),
        Some(Value::Number(n)) => {
            let t = n.as_f64().unwrap_or(f64::NAN);
            check_threshold(t).map_err(|e| ApiError::field("threshold", e))?;
            Ok(t)
        }
        Some(other) => Err(ApiError::field("threshold", format!("threshold must be a number, got {other}"))),
    }
}

fn take_weighting(map: &mut Map<String, Value>) -> Result<Weighting, ApiError> {
    match map.remove("weighting") {
        None | Some(Value::Null) => Ok(Weighting::Fuzzy),
        Some(v) => serde_json::from_value(v).map_err(|_| {
            ApiError::field("weighting", "weighting must be one of fuzzy, projected, crisp")
        }),
    }
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

const STRUCTURED_KEYS: [&str; 3] = ["statements", "raw_values", "context"];

/// Parses and validates a patient query, collecting one message per
/// offending field.
fn parse_query(model: &Model, map: Map<String, Value>) -> Result<PatientQuery, ApiError> {
    let structured = STRUCTURED_KEYS.iter().any(|k| map.contains_key(*k));
    let value = Value::Object(map);
    let query = match model.query_from_json(&value) {
        Ok(q) => q,
        Err(e) => {
            let mut fields = Vec::new();
            if !structured {
                for (key, v) in value.as_object().unwrap() {
                    if let Err(err) = model.query_from_pairs([(key.as_str(), scalar(v))]) {
                        fields.push(FieldError::new(key, err));
                    }
                }
            }
            if fields.is_empty() {
                fields.push(FieldError::new("query", &e));
            }
            return Err(ApiError::validation(e.to_string(), fields));
        }
    };
    let tree = model.tree();
    if let Err(e) = query.normalized(tree) {
        if e.is_undefined() {
            return Err(e.into());
        }
        let mut fields = Vec::new();
        if query.class > 1 {
            fields.push(FieldError::new("class", "class must be 0 or 1"));
        }
        for s in &query.statements {
            let single = PatientQuery {
                statements: vec![s.clone()],
                context: query.context.clone(),
                ..PatientQuery::default()
            };
            if let Err(err) = single.normalized(tree) {
                fields.push(FieldError::new(format!("statements.{}", s.variable), err));
            }
        }
        for (var, x) in &query.raw_values {
            let single = PatientQuery {
                raw_values: BTreeMap::from([(var.clone(), *x)]),
                context: query.context.clone(),
                ..PatientQuery::default()
            };
            if let Err(err) = single.normalized(tree) {
                fields.push(FieldError::new(format!("raw_values.{var}"), err));
            }
        }
        if fields.is_empty() {
            fields.push(FieldError::new("query", &e));
        }
        return Err(ApiError::validation(e.to_string(), fields));
    }
    Ok(query)
}

/// Distinct branch steps of a prediction, in walk order.
fn branches(prediction: &Prediction) -> Vec<BranchStep> {
    let mut seen = std::collections::BTreeSet::new();
    prediction
        .contributions
        .iter()
        .flat_map(|c| &c.path)
        .filter(|step| seen.insert(step.node))
        .cloned()
        .collect()
}

pub async fn predict(State(app): State<Arc<AppState>>, body: Bytes) -> Reply {
    let session = app.session();
    let outcome = run_predict(&session.model, &body);
    reply(&session, outcome)
}

fn run_predict(model: &Model, body: &[u8]) -> Outcome {
    let mut map = parse_object(body)?;
    let threshold = take_threshold(&mut map, model.threshold())?;
    let weighting = take_weighting(&mut map)?;
    let query = parse_query(model, map)?;
    let p1 = model.predict_with(&query.clone().with_class(1), weighting)?;
    let p0 = model.predict_with(&query.clone().with_class(0), weighting)?;
    let decision = classify(p1.probability, threshold)?;
    let queried = if query.class == 1 { &p1 } else { &p0 };
    let normalized = query.normalized(model.tree())?;
    ok(json!({
        "class": query.class,
        "probability": queried.probability,
        "p0": p0.probability,
        "p1": p1.probability,
        "label": decision.label,
        "threshold": threshold,
        "weighting": weighting,
        "statements": normalized.statements,
        "raw_values": query.raw_values,
        "context": query.context,
        "branches": branches(queried),
        "contributions": queried.contributions,
    }))
}

pub async fn counterfactual(State(app): State<Arc<AppState>>, body: Bytes) -> Reply {
    let session = app.session();
    let outcome = run_counterfactual(&session.model, &body);
    reply(&session, outcome)
}

fn parse_substitutions(model: &Model, value: Option<Value>) -> Result<Vec<Substitution>, ApiError> {
    let bad = |field: String, e: fpt_core::Error| ApiError::validation(e.to_string(), vec![FieldError::new(field, e)]);
    match value {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| {
                model
                    .substitution(k, &scalar(v))
                    .map_err(|e| bad(format!("substitutions.{k}"), e))
            })
            .collect(),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, item)| {
                let field = format!("substitutions[{i}]");
                match item {
                    Value::String(text) => {
                        let (k, v) = text.split_once('=').ok_or_else(|| {
                            ApiError::field(&field, format!("`{text}` is not variable=value"))
                        })?;
                        model.substitution(k, v).map_err(|e| bad(field, e))
                    }
                    Value::Object(_) => {
                        let sub: Substitution = serde_json::from_value(item)
                            .map_err(|e| ApiError::field(&field, e))?;
                        match (&sub.value, sub.raw) {
                            (Some(v), None) => model.substitution(&sub.variable, v),
                            (None, Some(x)) => model.substitution(&sub.variable, &x.to_string()),
                            _ => Ok(sub),
                        }
                        .map_err(|e| bad(field, e))
                    }
                    other => Err(ApiError::field(&field, format!("unexpected substitution {other}"))),
                }
            })
            .collect(),
        Some(other) => Err(ApiError::field(
            "substitutions",
            format!("substitutions must be a list or an object, got {other}"),
        )),
    }
}

fn run_counterfactual(model: &Model, body: &[u8]) -> Outcome {
    let mut map = parse_object(body)?;
    let threshold = take_threshold(&mut map, model.threshold())?;
    let query = match map.remove("query") {
        Some(Value::Object(q)) => parse_query(model, q)?,
        Some(_) => return Err(ApiError::field("query", "query must be a JSON object")),
        None => return Err(ApiError::field("query", "query is required")),
    };
    let substitutions = parse_substitutions(model, map.remove("substitutions"))?;
    if let Some(key) = map.keys().next() {
        return Err(ApiError::field(key, format!("unknown field `{key}`")));
    }
    let result = model.counterfactual(&query, &substitutions, Some(threshold))?;
    ok(serde_json::to_value(result).expect("result serialises"))
}

pub async fn conditional(State(app): State<Arc<AppState>>, body: Bytes) -> Reply {
    let session = app.session();
    let outcome = run_conditional(&session.model, &body);
    reply(&session, outcome)
}

fn run_conditional(model: &Model, body: &[u8]) -> Outcome {
    let mut map = parse_object(body)?;
    let class = match map.remove("class") {
        None | Some(Value::Null) => 1,
        Some(v) => match v.as_u64() {
            Some(c @ (0 | 1)) => c as u8,
            _ => return Err(ApiError::field("class", "class must be 0 or 1")),
        },
    };
    let conditions = map.remove("conditions").unwrap_or(Value::Array(Vec::new()));
    let query = model
        .query_from_json(&json!({ "statements": conditions }))
        .map_err(|e| ApiError::field("conditions", e))?;
    let p = conditional_probability(model.tree(), &query.statements, class).map_err(|e| {
        if e.is_undefined() {
            ApiError::from(e)
        } else {
            ApiError::field("conditions", e)
        }
    })?;
    ok(json!({ "class": class, "conditions": query.statements, "probability": p }))
}

fn evaluation_config(map: &mut Map<String, Value>, model: &Model) -> Result<(BootstrapConfig, Vec<String>), ApiError> {
    let mut config = BootstrapConfig {
        threshold: model.threshold(),
        ..BootstrapConfig::default()
    };
    let resamples = map.remove("resamples").or_else(|| map.remove("B"));
    if let Some(v) = resamples {
        config.resamples = match v.as_u64() {
            Some(n @ 1..=100_000) => n as usize,
            _ => return Err(ApiError::field("resamples", "resamples must be an integer from 1 to 100000")),
        };
    }
    if let Some(v) = map.remove("seed") {
        config.seed = v
            .as_u64()
            .ok_or_else(|| ApiError::field("seed", "seed must be a non-negative integer"))?;
    }
    if let Some(v) = map.remove("test_fraction") {
        config.test_fraction = match v.as_f64() {
            Some(f) if f > 0.0 && f < 1.0 => f,
            _ => return Err(ApiError::field("test_fraction", "test_fraction must lie strictly between 0 and 1")),
        };
    }
    config.threshold = take_threshold(map, config.threshold)?;
    let models = match map.remove("models") {
        None => vec!["FPT".to_string(), "PT".to_string()],
        Some(v) => {
            let names: Vec<String> = serde_json::from_value(v)
                .map_err(|_| ApiError::field("models", "models must be a list of names"))?;
            if names.is_empty() || names.iter().any(|n| n != "FPT" && n != "PT") {
                return Err(ApiError::field("models", "models must name FPT, PT or both"));
            }
            names
        }
    };
    if let Some(key) = map.keys().next() {
        return Err(ApiError::field(key, format!("unknown field `{key}`")));
    }
    Ok((config, models))
}

pub async fn evaluate(State(app): State<Arc<AppState>>, body: Bytes) -> Reply {
    let session = app.session();
    let started = parse_object(&body).and_then(|mut map| {
        let request = Value::Object(map.clone());
        let (config, models) = evaluation_config(&mut map, &session.model)?;
        let id = app.add_job(&session.fingerprint, request);
        let (app, job_session) = (app.clone(), session.clone());
        tokio::task::spawn_blocking(move || {
            let outcome = run_evaluation(&job_session, &config, &models).map_err(|e| e.to_string());
            app.finish_job(id, outcome);
        });
        Ok((
            StatusCode::ACCEPTED,
            json!({ "id": id, "status": "running", "href": format!("/evaluate/{id}") }),
        ))
    });
    reply(&session, started)
}

fn run_evaluation(session: &Session, config: &BootstrapConfig, models: &[String]) -> fpt_core::Result<Value> {
    let spec = session.model.spec().clone();
    let builders: Vec<TreeBuilder> = models
        .iter()
        .map(|m| match m.as_str() {
            "PT" => TreeBuilder::crisp(spec.clone()),
            _ => TreeBuilder::fuzzy(spec.clone()),
        })
        .collect();
    let refs: Vec<&dyn ModelBuilder> = builders.iter().map(|b| b as &dyn ModelBuilder).collect();
    let comparison = bootstrap_compare(&session.dataset.records, &refs, config)?;
    let mut body = json!({
        "reports": comparison.reports,
        "table": render_table(&comparison.reports),
    });
    if refs.len() == 2 {
        let diffs: Vec<_> = Metric::ALL
            .iter()
            .map(|m| comparison.paired_difference(*m, 0, 1))
            .collect();
        body["paired_differences"] = json!({ "minuend": models[0], "subtrahend": models[1], "metrics": diffs });
    }
    Ok(body)
}

pub async fn evaluation(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    let session = app.session();
    let outcome = id
        .parse::<u64>()
        .ok()
        .and_then(|id| app.job(id))
        .map(|job| (StatusCode::OK, serde_json::to_value(job).expect("job serialises")))
        .ok_or_else(|| ApiError::not_found(format!("no evaluation job `{id}`")));
    reply(&session, outcome)
}

pub async fn reload(State(app): State<Arc<AppState>>) -> Reply {
    let current = app.session();
    let Some(sources) = app.sources().cloned() else {
        return reply(
            &current,
            Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "reload-unavailable",
                "this model was not loaded from files",
            )),
        );
    };
    let loaded = tokio::task::spawn_blocking(move || Session::load(&sources))
        .await
        .expect("reload task");
    match loaded {
        Ok(session) => {
            let previous = app.swap(session);
            let now = app.session();
            log::info!("reloaded model {} (was {})", &now.fingerprint[..12], &previous.fingerprint[..12]);
            let body = json!({
                "fingerprint": now.fingerprint,
                "previous_fingerprint": previous.fingerprint,
                "changed": now.fingerprint != previous.fingerprint,
                "stats": now.model.stats(),
                "rows_retained": now.report.rows_retained,
            });
            reply(&now, ok(body))
        }
        Err(e) => {
            let mut err = ApiError::from(e);
            err.status = StatusCode::UNPROCESSABLE_ENTITY;
            err.code = "reload-failed";
            reply(&current, Err(err))
        }
    }
}
