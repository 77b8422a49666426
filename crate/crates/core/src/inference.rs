//! Queries over a [`ProbabilityTree`]: events, conditioning, and the fuzzy
//! recursive prediction.
//!
//! Prediction walks the tree following the patient's statements. A crisp
//! statement picks one child. A fuzzy-bound variable splits the mass over
//! every term by the membership degree of the patient's raw value. A
//! variable the patient has no statement for is averaged uniformly over its
//! children. When the walk runs out of statements, or lands on a
//! combination the training data never produced, the class probability is
//! conditioned on the longest prefix of the confirmed statements that the
//! data supports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::DEGREE_TOLERANCE;
use crate::tree::{NodeId, ProbabilityTree, Realisation, Statement};

/// A boolean formula over statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposition {
    True,
    Is(Statement),
    Not(Box<Proposition>),
    And(Vec<Proposition>),
    Or(Vec<Proposition>),
}

impl Proposition {
    pub fn is(variable: impl Into<String>, value: impl Into<String>) -> Self {
        Proposition::Is(Statement::new(variable, value))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Proposition::Not(Box::new(self))
    }

    pub fn and(self, other: Proposition) -> Self {
        Proposition::And(vec![self, other])
    }

    pub fn or(self, other: Proposition) -> Self {
        Proposition::Or(vec![self, other])
    }

    pub fn holds(&self, realisation: &Realisation) -> bool {
        match self {
            Proposition::True => true,
            Proposition::Is(s) => realisation.contains(s),
            Proposition::Not(p) => !p.holds(realisation),
            Proposition::And(ps) => ps.iter().all(|p| p.holds(realisation)),
            Proposition::Or(ps) => ps.iter().any(|p| p.holds(realisation)),
        }
    }

    fn validate(&self, tree: &ProbabilityTree) -> Result<()> {
        match self {
            Proposition::True => Ok(()),
            Proposition::Is(s) => tree.schema().check(s).map(|_| ()),
            Proposition::Not(p) => p.validate(tree),
            Proposition::And(ps) | Proposition::Or(ps) => {
                ps.iter().try_for_each(|p| p.validate(tree))
            }
        }
    }
}

impl std::fmt::Display for Proposition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |f: &mut std::fmt::Formatter<'_>, ps: &[Proposition], op: &str| {
            f.write_str("(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        };
        match self {
            Proposition::True => f.write_str("TRUE"),
            Proposition::Is(s) => write!(f, "{s}"),
            Proposition::Not(p) => write!(f, "NOT {p}"),
            Proposition::And(ps) => join(f, ps, "AND"),
            Proposition::Or(ps) => join(f, ps, "OR"),
        }
    }
}

/// The set of total realisations selected by a proposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub proposition: Proposition,
}

impl Event {
    pub fn new(proposition: Proposition) -> Self {
        Event { proposition }
    }

    /// Leaves of the realisations satisfying the proposition.
    pub fn resolve(&self, tree: &ProbabilityTree) -> Result<Vec<NodeId>> {
        self.proposition.validate(tree)?;
        Ok(tree
            .realisations()
            .into_iter()
            .filter(|r| self.proposition.holds(r))
            .map(|r| r.leaf)
            .collect())
    }

    pub fn probability(&self, tree: &ProbabilityTree) -> Result<f64> {
        self.proposition.validate(tree)?;
        Ok(tree
            .realisations()
            .iter()
            .filter(|r| self.proposition.holds(r))
            .map(|r| r.probability)
            .sum())
    }
}

pub fn event_probability(tree: &ProbabilityTree, event: &Event) -> Result<f64> {
    event.probability(tree)
}

/// `P(class | conditions)` where the conditions are a conjunction.
pub fn conditional_probability(
    tree: &ProbabilityTree,
    conditions: &[Statement],
    class: u8,
) -> Result<f64> {
    check_class(class)?;
    let mut allowed: Vec<Option<usize>> = vec![None; tree.schema().len()];
    for statement in conditions {
        let (var, value) = tree.schema().check(statement)?;
        match allowed[var] {
            Some(existing) if existing != value => {
                return Err(Error::UndefinedConditional {
                    conditions: conditions.to_vec(),
                })
            }
            _ => allowed[var] = Some(value),
        }
    }

    fn mass(
        tree: &ProbabilityTree,
        id: NodeId,
        path_probability: f64,
        allowed: &[Option<usize>],
        class: u8,
    ) -> (f64, f64) {
        let node = tree.node(id);
        if node.is_leaf() {
            let ratio = tree.leaf_ratio(node, class).unwrap_or(0.0);
            return (path_probability * ratio, path_probability);
        }
        let mut joint = 0.0;
        let mut marginal = 0.0;
        for (value, t) in node.transitions.iter().enumerate() {
            if allowed[node.depth].is_some_and(|a| a != value) || t.probability == 0.0 {
                continue;
            }
            let (j, m) = mass(tree, t.child, path_probability * t.probability, allowed, class);
            joint += j;
            marginal += m;
        }
        (joint, marginal)
    }

    let (joint, marginal) = mass(tree, 0, 1.0, &allowed, class);
    if marginal <= 0.0 {
        return Err(Error::UndefinedConditional {
            conditions: conditions.to_vec(),
        });
    }
    Ok((joint / marginal).clamp(0.0, 1.0))
}

/// Longest prefix of `statements` that can be followed from the root through
/// nodes the training data reaches.
pub fn find_existing_conditions(tree: &ProbabilityTree, statements: &[Statement]) -> Vec<Statement> {
    let mut current = tree.root();
    for (idx, statement) in statements.iter().enumerate() {
        let Some(var) = tree.branching_variable(current) else {
            return statements[..idx].to_vec();
        };
        if var.name != statement.variable {
            return statements[..idx].to_vec();
        }
        let next = var
            .value_index(&statement.value)
            .map(|i| tree.node(current.transitions[i].child))
            .filter(|child| child.support > 0);
        match next {
            Some(child) => current = child,
            None => return statements[..idx].to_vec(),
        }
    }
    statements.to_vec()
}

/// A patient's known statements plus the raw measurements behind fuzzy
/// variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientQuery {
    #[serde(default)]
    pub statements: Vec<Statement>,
    /// Raw measurements keyed by schema variable, for fuzzy-bound variables.
    #[serde(default)]
    pub raw_values: BTreeMap<String, f64>,
    /// Non-tree columns used by fuzzy-set selectors.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, String>,
    #[serde(default = "positive_class")]
    pub class: u8,
    /// Condition on the exact confirmed statements instead of falling back
    /// to the longest supported prefix; unsupported combinations then fail.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict: bool,
}

fn positive_class() -> u8 {
    1
}

impl Default for PatientQuery {
    fn default() -> Self {
        PatientQuery {
            statements: Vec::new(),
            raw_values: BTreeMap::new(),
            context: BTreeMap::new(),
            class: 1,
            strict: false,
        }
    }
}

impl PatientQuery {
    pub fn with_class(mut self, class: u8) -> Self {
        self.class = class;
        self
    }

    /// Validates against the tree and returns the query in canonical form:
    /// statements in schema order, one per known variable, and fuzzy
    /// statements set to the crisp projection of their raw value.
    pub fn normalized(&self, tree: &ProbabilityTree) -> Result<PatientQuery> {
        let resolved = resolve(tree, self, Weighting::Crisp)?;
        Ok(PatientQuery {
            statements: resolved.into_iter().map(|r| r.statement).collect(),
            ..self.clone()
        })
    }
}

/// How fuzzy-bound statements choose branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Split over all terms by membership degree.
    #[default]
    Fuzzy,
    /// Traverse all terms like `Fuzzy`, with degrees replaced by the 0/1
    /// indicator of the crisp projection.
    Projected,
    /// Follow the crisp projection only: a plain probability tree.
    Crisp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchStep {
    pub node: NodeId,
    pub statement: Statement,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContributionSource {
    Leaf { node: NodeId },
    Conditional { conditions: Vec<Statement> },
}

/// One terminal of the prediction walk and the mass it received.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    pub path: Vec<BranchStep>,
    pub weight: f64,
    pub value: f64,
    pub source: ContributionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class: u8,
    pub probability: f64,
    pub contributions: Vec<Contribution>,
}

pub fn predict(tree: &ProbabilityTree, query: &PatientQuery) -> Result<Prediction> {
    predict_with(tree, query, Weighting::Fuzzy)
}

pub fn predict_with(
    tree: &ProbabilityTree,
    query: &PatientQuery,
    weighting: Weighting,
) -> Result<Prediction> {
    check_class(query.class)?;
    let resolved = resolve(tree, query, weighting)?;
    let mut walker = Walker {
        tree,
        class: query.class,
        strict: query.strict,
        statements: &resolved,
        trail: Vec::new(),
        contributions: Vec::new(),
    };
    let mut confirmed = Vec::new();
    let probability = walker.walk(0, 0, &mut confirmed, 1.0)?;
    Ok(Prediction {
        class: query.class,
        probability: probability.clamp(0.0, 1.0),
        contributions: walker.contributions,
    })
}

fn check_class(class: u8) -> Result<()> {
    if class > 1 {
        return Err(Error::query(format!("class must be 0 or 1, got {class}")));
    }
    Ok(())
}

#[derive(Debug)]
enum Selection {
    /// Index of the declared value, `None` for a value the schema never saw.
    Crisp(Option<usize>),
    /// One weight per child, summing to one.
    Weighted(Vec<f64>),
}

#[derive(Debug)]
struct ResolvedStatement {
    var: usize,
    statement: Statement,
    selection: Selection,
}

fn resolve(
    tree: &ProbabilityTree,
    query: &PatientQuery,
    weighting: Weighting,
) -> Result<Vec<ResolvedStatement>> {
    let schema = tree.schema();
    let mut by_var: BTreeMap<usize, Option<&str>> = BTreeMap::new();
    let mut last: Option<usize> = None;
    for s in &query.statements {
        let var = schema
            .index_of(&s.variable)
            .ok_or_else(|| Error::query(format!("unknown variable `{}`", s.variable)))?;
        if last.is_some_and(|l| l >= var) {
            return Err(Error::query(format!(
                "statement on `{}` is out of schema order or repeated",
                s.variable
            )));
        }
        last = Some(var);
        by_var.insert(var, Some(s.value.as_str()));
    }
    for name in query.raw_values.keys() {
        let var = schema
            .index_of(name)
            .ok_or_else(|| Error::query(format!("raw value for unknown variable `{name}`")))?;
        if tree.binding(name).is_none() {
            return Err(Error::query(format!(
                "raw value given for `{name}`, which has no fuzzy sets"
            )));
        }
        by_var.entry(var).or_insert(None);
    }

    by_var
        .into_iter()
        .map(|(var, value)| {
            let schema_var = schema.get(var);
            let name = &schema_var.name;
            let raw = query.raw_values.get(name).copied();
            let (value_index, selection) = match (tree.binding(name), raw) {
                (Some(binding), Some(x)) => {
                    if !x.is_finite() {
                        return Err(Error::query(format!("raw value of `{name}` must be finite, got {x}")));
                    }
                    let lv = binding.resolve(&query.context)?;
                    let projected = schema_var
                        .value_index(lv.crisp_project(x)?)
                        .expect("terms match schema values");
                    let selection = match weighting {
                        Weighting::Crisp => Selection::Crisp(Some(projected)),
                        Weighting::Projected => Selection::Weighted(
                            (0..schema_var.values.len())
                                .map(|i| if i == projected { 1.0 } else { 0.0 })
                                .collect(),
                        ),
                        Weighting::Fuzzy => Selection::Weighted(branch_weights(name, x, lv.degrees(x)?)?),
                    };
                    (Some(projected), selection)
                }
                (Some(_), None) | (None, None) => {
                    let value = value.expect("statement present when no raw value");
                    let index = schema_var.value_index(value);
                    if index.is_none() && tree.binding(name).is_some() {
                        return Err(Error::query(format!("`{value}` is not a term of `{name}`")));
                    }
                    (index, Selection::Crisp(index))
                }
                (None, Some(_)) => unreachable!("raw values checked against bindings"),
            };
            let value = match value_index {
                Some(i) => schema_var.values[i].clone(),
                None => value.unwrap_or_default().to_string(),
            };
            Ok(ResolvedStatement {
                var,
                statement: Statement::new(name, value),
                selection,
            })
        })
        .collect()
}

fn branch_weights(name: &str, x: f64, degrees: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = degrees.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedPrediction(format!(
            "no term of `{name}` has positive membership at {x}"
        )));
    }
    if (total - 1.0).abs() <= DEGREE_TOLERANCE {
        Ok(degrees)
    } else {
        Ok(degrees.into_iter().map(|d| d / total).collect())
    }
}

struct Walker<'a> {
    tree: &'a ProbabilityTree,
    class: u8,
    strict: bool,
    statements: &'a [ResolvedStatement],
    trail: Vec<BranchStep>,
    contributions: Vec<Contribution>,
}

impl Walker<'_> {
    fn walk(
        &mut self,
        id: NodeId,
        next: usize,
        confirmed: &mut Vec<Statement>,
        weight: f64,
    ) -> Result<f64> {
        let tree = self.tree;
        let node = tree.node(id);
        if node.is_leaf() {
            return match tree.leaf_ratio(node, self.class) {
                Some(ratio) => {
                    self.record(weight, ratio, ContributionSource::Leaf { node: id });
                    Ok(ratio)
                }
                None => self.fallback(confirmed, weight),
            };
        }
        let Some(statement) = self.statements.get(next) else {
            return self.fallback(confirmed, weight);
        };

        if statement.var == node.depth {
            match &statement.selection {
                Selection::Weighted(weights) => {
                    let mut probability = 0.0;
                    for (t, &w) in node.transitions.iter().zip(weights) {
                        if self.strict && w == 0.0 {
                            continue;
                        }
                        let child = tree.node(t.child);
                        confirmed.push(child.statements[0].clone());
                        self.descend(child.id, w);
                        let p = self.walk(t.child, next + 1, confirmed, weight * w);
                        self.trail.pop();
                        confirmed.pop();
                        probability += w * p?;
                    }
                    Ok(probability)
                }
                Selection::Crisp(Some(value)) => {
                    let child = tree.node(node.transitions[*value].child);
                    if child.support == 0 && !self.strict {
                        return self.fallback(confirmed, weight);
                    }
                    confirmed.push(child.statements[0].clone());
                    self.descend(child.id, 1.0);
                    let p = self.walk(child.id, next + 1, confirmed, weight);
                    self.trail.pop();
                    confirmed.pop();
                    p
                }
                Selection::Crisp(None) => self.fallback(confirmed, weight),
            }
        } else {
            let w = 1.0 / node.transitions.len() as f64;
            let mut probability = 0.0;
            for t in &node.transitions {
                self.descend(t.child, w);
                let p = self.walk(t.child, next, confirmed, weight * w);
                self.trail.pop();
                probability += w * p?;
            }
            Ok(probability)
        }
    }

    fn descend(&mut self, child: NodeId, weight: f64) {
        self.trail.push(BranchStep {
            node: child,
            statement: self.tree.node(child).statements[0].clone(),
            weight,
        });
    }

    fn fallback(&mut self, confirmed: &[Statement], weight: f64) -> Result<f64> {
        let (conditions, value) = if self.strict {
            let value = conditional_probability(self.tree, confirmed, self.class)?;
            (confirmed.to_vec(), value)
        } else {
            let conditions = find_existing_conditions(self.tree, confirmed);
            let value = conditional_probability(self.tree, &conditions, self.class).map_err(|e| match e {
                Error::UndefinedConditional { conditions } => Error::UndefinedPrediction(format!(
                    "no training data supports {}",
                    crate::error::format_conditions(&conditions)
                )),
                other => other,
            })?;
            (conditions, value)
        };
        self.record(weight, value, ContributionSource::Conditional { conditions });
        Ok(value)
    }

    fn record(&mut self, weight: f64, value: f64, source: ContributionSource) {
        self.contributions.push(Contribution {
            path: self.trail.clone(),
            weight,
            value,
            source,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, Record};
    use crate::fuzzy::{CrispCut, FuzzyBinding, LinguisticVariable, MembershipFunction, Shape};
    use crate::tree::{BuildOptions, Schema, SchemaVariable};

    fn row(values: &[&str], label: u8) -> Record {
        Record {
            id: None,
            line: 0,
            cells: values.iter().map(|v| Some(Cell::level(*v))).collect(),
            context: BTreeMap::new(),
            label,
        }
    }

    fn binary_tree(names: &[&str], rows: &[Record]) -> ProbabilityTree {
        let schema = Schema::new(
            names
                .iter()
                .map(|n| SchemaVariable::new(*n, ["0", "1"]))
                .collect(),
        )
        .unwrap();
        ProbabilityTree::build(rows, schema, BTreeMap::new(), BuildOptions::default()).unwrap()
    }

    fn hand_tree() -> ProbabilityTree {
        binary_tree(
            &["X", "Y", "Z"],
            &[
                row(&["0", "0", "0"], 0),
                row(&["0", "0", "1"], 1),
                row(&["0", "1", "1"], 1),
                row(&["1", "0", "0"], 0),
                row(&["1", "0", "0"], 1),
                row(&["1", "1", "0"], 0),
                row(&["1", "1", "1"], 1),
                row(&["1", "1", "1"], 1),
            ],
        )
    }

    fn s(var: &str, val: &str) -> Statement {
        Statement::new(var, val)
    }

    #[test]
    fn true_event_has_probability_one() {
        let p = Event::new(Proposition::True).probability(&hand_tree()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_statement_event_is_its_edge() {
        let tree = binary_tree(&["X"], &[row(&["0"], 0), row(&["1"], 1), row(&["1"], 1)]);
        let p = Event::new(Proposition::is("X", "1")).probability(&tree).unwrap();
        assert_eq!(p, tree.root().transitions[1].probability);
    }

    #[test]
    fn negated_conjunction_by_enumeration() {
        // X: 0 in 3 of 8 rows; Y=1 given X=0 in 1 of 3
        let tree = hand_tree();
        let e = Proposition::is("X", "0").and(Proposition::is("Y", "1")).not();
        let p = Event::new(e).probability(&tree).unwrap();
        assert!((p - (1.0 - 3.0 / 8.0 * 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn unknown_statement_in_event_is_a_query_error() {
        let err = Event::new(Proposition::is("Q", "1")).probability(&hand_tree()).unwrap_err();
        assert!(matches!(err, Error::Query(_)));
        let err = Event::new(Proposition::is("X", "7")).probability(&hand_tree()).unwrap_err();
        assert!(matches!(err, Error::Query(_)));
    }

    #[test]
    fn empty_conditions_give_the_prior() {
        let p = conditional_probability(&hand_tree(), &[], 1).unwrap();
        assert!((p - 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn pure_leaf_condition() {
        let tree = hand_tree();
        let p = conditional_probability(&tree, &[s("X", "0"), s("Y", "1"), s("Z", "1")], 1).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn first_variable_condition_by_hand() {
        // X=1 rows: labels 0,1,0,1,1
        let p = conditional_probability(&hand_tree(), &[s("X", "1")], 1).unwrap();
        assert!((p - 3.0 / 5.0).abs() < 1e-12);
        // a non-prefix condition: Z=0 rows are 000:0, 100:0, 100:1, 110:0
        let p = conditional_probability(&hand_tree(), &[s("Z", "0")], 1).unwrap();
        assert!((p - 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_conditions_are_undefined() {
        let tree = hand_tree();
        let conditions = vec![s("X", "0"), s("Y", "1"), s("Z", "0")];
        match conditional_probability(&tree, &conditions, 1) {
            Err(Error::UndefinedConditional { conditions: c }) => assert_eq!(c, conditions),
            other => panic!("expected undefined conditional, got {other:?}"),
        }
        assert!(conditional_probability(&tree, &[s("X", "0"), s("X", "1")], 1).is_err());
    }

    #[test]
    fn existing_conditions() {
        let tree = hand_tree();
        let full = vec![s("X", "1"), s("Y", "1"), s("Z", "1")];
        assert_eq!(find_existing_conditions(&tree, &full), full);
        assert!(find_existing_conditions(&tree, &[s("Y", "1")]).is_empty());
        // X=0,Y=1,Z=0 never occurs
        let diverging = vec![s("X", "0"), s("Y", "1"), s("Z", "0")];
        assert_eq!(find_existing_conditions(&tree, &diverging), diverging[..2].to_vec());
        assert_eq!(find_existing_conditions(&tree, &[s("X", "9")]), vec![]);
    }

    #[test]
    fn existing_conditions_diverge_at_depth_two_of_four() {
        let tree = binary_tree(
            &["A", "B", "C", "D"],
            &[
                row(&["0", "0", "0", "0"], 0),
                row(&["0", "0", "1", "1"], 1),
                row(&["1", "1", "1", "1"], 1),
            ],
        );
        let query = vec![s("A", "0"), s("B", "0"), s("C", "0"), s("D", "1")];
        // A=0,B=0,C=0,D=1 is missing at depth four; A=0,B=1 at depth two
        assert_eq!(find_existing_conditions(&tree, &query).len(), 3);
        let query = vec![s("A", "0"), s("B", "1"), s("C", "1"), s("D", "1")];
        assert_eq!(find_existing_conditions(&tree, &query), query[..1].to_vec());
        let query = vec![s("A", "0"), s("B", "0"), s("C", "1"), s("D", "0")];
        assert_eq!(find_existing_conditions(&tree, &query), query[..3].to_vec());
    }

    fn crisp_query(statements: &[(&str, &str)]) -> PatientQuery {
        PatientQuery {
            statements: statements.iter().map(|(a, b)| s(a, b)).collect(),
            ..PatientQuery::default()
        }
    }

    #[test]
    fn crisp_full_path_is_the_leaf_ratio() {
        let tree = hand_tree();
        let p = predict(&tree, &crisp_query(&[("X", "1"), ("Y", "1"), ("Z", "1")])).unwrap();
        assert_eq!(p.probability, 1.0);
        let p = predict(&tree, &crisp_query(&[("X", "1"), ("Y", "0"), ("Z", "0")])).unwrap();
        assert_eq!(p.probability, 0.5);
        assert_eq!(p.contributions.len(), 1);
    }

    #[test]
    fn classes_are_complementary() {
        let tree = hand_tree();
        for q in [
            crisp_query(&[("X", "1"), ("Z", "0")]),
            crisp_query(&[("Y", "1")]),
            crisp_query(&[]),
            crisp_query(&[("X", "0"), ("Y", "1"), ("Z", "0")]),
        ] {
            let p1 = predict(&tree, &q).unwrap().probability;
            let p0 = predict(&tree, &q.clone().with_class(0)).unwrap().probability;
            assert!((p0 + p1 - 1.0).abs() < 1e-9, "{q:?}");
        }
    }

    #[test]
    fn statements_running_out_condition_on_the_prefix() {
        let p = predict(&hand_tree(), &crisp_query(&[("X", "1")])).unwrap();
        assert!((p.probability - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn absent_variable_is_averaged_uniformly() {
        // Y absent: 0.5 * P(1 | X=1,Y=0,Z=1) + 0.5 * P(1 | X=1,Y=1,Z=1)
        // X=1,Y=0,Z=1 has no rows, so that half falls back to P(1 | X=1) = 3/5
        let p = predict(&hand_tree(), &crisp_query(&[("X", "1"), ("Z", "1")])).unwrap();
        assert!((p.probability - (0.5 * 0.6 + 0.5 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn unsupported_crisp_value_falls_back() {
        // X=0,Y=1,Z=0 is absent: fall back to P(1 | X=0,Y=1) = 1
        let p = predict(&hand_tree(), &crisp_query(&[("X", "0"), ("Y", "1"), ("Z", "0")])).unwrap();
        assert_eq!(p.probability, 1.0);
        match &p.contributions[0].source {
            ContributionSource::Conditional { conditions } => {
                assert_eq!(conditions, &vec![s("X", "0"), s("Y", "1")])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_categorical_value_falls_back() {
        let p = predict(&hand_tree(), &crisp_query(&[("X", "1"), ("Y", "maybe"), ("Z", "1")])).unwrap();
        assert!((p.probability - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn strict_queries_surface_undefined_conditionals() {
        let mut q = crisp_query(&[("X", "0"), ("Y", "1"), ("Z", "0")]);
        q.strict = true;
        assert!(matches!(
            predict(&hand_tree(), &q),
            Err(Error::UndefinedConditional { .. })
        ));
        q.statements[2].value = "1".into();
        assert_eq!(predict(&hand_tree(), &q).unwrap().probability, 1.0);
    }

    #[test]
    fn query_validation() {
        let tree = hand_tree();
        assert!(matches!(predict(&tree, &crisp_query(&[("W", "1")])), Err(Error::Query(_))));
        assert!(matches!(
            predict(&tree, &crisp_query(&[("Y", "1"), ("X", "1")])),
            Err(Error::Query(_))
        ));
        assert!(matches!(
            predict(&tree, &crisp_query(&[("X", "1")]).with_class(2)),
            Err(Error::Query(_))
        ));
        let mut q = crisp_query(&[]);
        q.raw_values.insert("X".into(), 3.0);
        assert!(matches!(predict(&tree, &q), Err(Error::Query(_))));
    }

    fn fuzzy_tree() -> ProbabilityTree {
        let lv = LinguisticVariable::complementary_pair(
            "Big",
            "size",
            "0",
            "1",
            MembershipFunction::new(Shape::RectTrapezoid, &[10.0, 20.0]).unwrap(),
        )
        .unwrap()
        .with_crisp_cut(CrispCut::above(20.0))
        .unwrap();
        let mut bindings = BTreeMap::new();
        bindings.insert("Big".to_string(), FuzzyBinding::single(lv));
        let schema = Schema::new(vec![
            SchemaVariable::new("Kind", ["a", "b"]),
            SchemaVariable::new("Big", ["0", "1"]),
        ])
        .unwrap();
        let rec = |kind: &str, size: f64, label: u8| Record {
            id: None,
            line: 0,
            cells: vec![Some(Cell::level(kind)), Some(Cell::Number(size))],
            context: BTreeMap::new(),
            label,
        };
        let rows = vec![
            rec("a", 5.0, 0),
            rec("a", 8.0, 0),
            rec("a", 25.0, 1),
            rec("a", 30.0, 1),
            rec("a", 22.0, 0),
            rec("b", 3.0, 0),
        ];
        ProbabilityTree::build(&rows, schema, bindings, BuildOptions::default()).unwrap()
    }

    #[test]
    fn fuzzy_degrees_weight_the_leaves() {
        let tree = fuzzy_tree();
        let mut q = crisp_query(&[("Kind", "a")]);
        q.raw_values.insert("Big".into(), 18.0);
        let p = predict(&tree, &q).unwrap();
        // 0.2 * 0/2 + 0.8 * 2/3
        assert!((p.probability - 0.8 * 2.0 / 3.0).abs() < 1e-12);
        let total: f64 = p.contributions.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let crisp = predict_with(&tree, &q, Weighting::Crisp).unwrap();
        assert_eq!(crisp.probability, 0.0);
        // the statement value follows the raw measurement
        assert_eq!(q.normalized(&tree).unwrap().statements[1], s("Big", "0"));
    }

    #[test]
    fn fuzzy_mass_in_unsupported_subtree_falls_back() {
        // Kind=b has no Big=1 rows; at 15 mm half the mass lands there and
        // falls back to P(1 | Kind=b) = 0
        let tree = fuzzy_tree();
        let mut q = crisp_query(&[("Kind", "b")]);
        q.raw_values.insert("Big".into(), 15.0);
        let p = predict(&tree, &q).unwrap();
        assert_eq!(p.probability, 0.0);
        assert_eq!(p.contributions.len(), 2);
    }

    #[test]
    fn fuzzy_statement_without_raw_value_is_crisp() {
        let tree = fuzzy_tree();
        let p = predict(&tree, &crisp_query(&[("Kind", "a"), ("Big", "1")])).unwrap();
        assert!((p.probability - 2.0 / 3.0).abs() < 1e-12);
        assert!(predict(&tree, &crisp_query(&[("Kind", "a"), ("Big", "large")])).is_err());
    }
}
