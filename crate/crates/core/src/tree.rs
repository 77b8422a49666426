//! Probability trees induced from tabular data.
//!
//! The variable order is fixed by the schema. Every combination of declared
//! values is materialised, so a tree over variables with `k1, k2, ...` values
//! has `k1 * k2 * ...` leaves whether or not the data covers them. Edge
//! probabilities are relative frequencies among the rows reaching the parent;
//! leaves tally class labels.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::data::{Cell, Record};
use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyBinding, DEGREE_TOLERANCE};

/// `variable IS value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Statement {
    pub variable: String,
    pub value: String,
}

impl Statement {
    pub fn new(variable: impl Into<String>, value: impl Into<String>) -> Self {
        Statement {
            variable: variable.into(),
            value: value.into(),
        }
    }
}

impl std::fmt::Display for Statement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.variable, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaVariable {
    pub name: String,
    pub values: Vec<String>,
}

impl SchemaVariable {
    pub fn new<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        SchemaVariable {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Ordered tree variables; the order is the root-to-leaf order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<SchemaVariable>", into = "Vec<SchemaVariable>")]
pub struct Schema {
    variables: Vec<SchemaVariable>,
}

impl TryFrom<Vec<SchemaVariable>> for Schema {
    type Error = Error;

    fn try_from(variables: Vec<SchemaVariable>) -> Result<Self> {
        Schema::new(variables)
    }
}

impl From<Schema> for Vec<SchemaVariable> {
    fn from(schema: Schema) -> Self {
        schema.variables
    }
}

impl Schema {
    pub fn new(variables: Vec<SchemaVariable>) -> Result<Self> {
        for (i, var) in variables.iter().enumerate() {
            if var.name.is_empty() {
                return Err(Error::Config("variable names must be non-empty".into()));
            }
            if variables[..i].iter().any(|v| v.name == var.name) {
                return Err(Error::Config(format!("duplicate variable `{}`", var.name)));
            }
            if var.values.is_empty() {
                return Err(Error::Config(format!("variable `{}` has no values", var.name)));
            }
            for (j, value) in var.values.iter().enumerate() {
                if value.is_empty() || var.values[..j].contains(value) {
                    return Err(Error::Config(format!(
                        "variable `{}` has an empty or duplicate value `{value}`",
                        var.name
                    )));
                }
            }
        }
        Ok(Schema { variables })
    }

    pub fn variables(&self) -> &[SchemaVariable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn get(&self, index: usize) -> &SchemaVariable {
        &self.variables[index]
    }

    /// Number of total realisations: the product of the range sizes.
    pub fn combinations(&self) -> usize {
        self.variables.iter().map(|v| v.values.len()).product()
    }

    /// Checks that `statement` names a declared variable and value.
    pub fn check(&self, statement: &Statement) -> Result<(usize, usize)> {
        let var = self
            .index_of(&statement.variable)
            .ok_or_else(|| Error::query(format!("unknown variable `{}`", statement.variable)))?;
        let value = self.variables[var].value_index(&statement.value).ok_or_else(|| {
            Error::query(format!(
                "`{}` is not a declared value of `{}`",
                statement.value, statement.variable
            ))
        })?;
        Ok((var, value))
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub child: NodeId,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    /// Empty for the root, otherwise the statement on the incoming edge.
    pub statements: Vec<Statement>,
    pub depth: usize,
    /// Training rows whose path reaches this node.
    pub support: u64,
    /// Ordered as the next variable's declared values.
    pub transitions: Vec<Transition>,
    /// `[class 0, class 1]`, present exactly on leaves.
    pub class_counts: Option<[u64; 2]>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Additive smoothing applied to edge probabilities and leaf ratios.
    #[serde(default)]
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTree {
    nodes: Vec<TreeNode>,
    schema: Schema,
    bindings: BTreeMap<String, FuzzyBinding>,
    training_rows: u64,
    smoothing: f64,
}

/// A root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realisation {
    pub path: Vec<(Statement, f64)>,
    pub probability: f64,
    pub leaf: NodeId,
}

impl Realisation {
    pub fn contains(&self, statement: &Statement) -> bool {
        self.path.iter().any(|(s, _)| s == statement)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub realisations: usize,
    pub mean_rows_per_realisation: f64,
    pub nonzero_leaves: usize,
    pub training_rows: u64,
}

impl ProbabilityTree {
    /// Induces a tree from `records`. Numeric cells of fuzzy-bound variables
    /// are crisp-projected onto a term before counting.
    pub fn build(
        records: &[Record],
        schema: Schema,
        bindings: BTreeMap<String, FuzzyBinding>,
        options: BuildOptions,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(options.smoothing >= 0.0 && options.smoothing.is_finite()) {
            return Err(Error::Config(format!(
                "smoothing must be a non-negative number, got {}",
                options.smoothing
            )));
        }
        check_bindings(&schema, &bindings)?;

        let symbols = records
            .iter()
            .enumerate()
            .map(|(i, record)| resolve_record(&schema, &bindings, i, record))
            .collect::<Result<Vec<_>>>()?;

        let alpha = options.smoothing;
        let mut nodes = vec![TreeNode {
            id: 0,
            statements: Vec::new(),
            depth: 0,
            support: records.len() as u64,
            transitions: Vec::new(),
            class_counts: None,
        }];
        // Breadth-first: ids are handed out in the order nodes are queued.
        let mut queue: VecDeque<(NodeId, Vec<usize>)> = VecDeque::new();
        queue.push_back((0, (0..records.len()).collect()));
        while let Some((id, rows)) = queue.pop_front() {
            let depth = nodes[id].depth;
            if depth == schema.len() {
                let mut counts = [0u64; 2];
                for &r in &rows {
                    counts[usize::from(records[r].label)] += 1;
                }
                nodes[id].class_counts = Some(counts);
                continue;
            }
            let var = schema.get(depth);
            let k = var.values.len();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for r in rows {
                groups[symbols[r][depth]].push(r);
            }
            let parent = nodes[id].support as f64;
            let denom = parent + alpha * k as f64;
            let mut transitions = Vec::with_capacity(k);
            for (value, group) in groups.into_iter().enumerate() {
                let child = nodes.len();
                let probability = if denom > 0.0 {
                    (group.len() as f64 + alpha) / denom
                } else {
                    1.0 / k as f64
                };
                nodes.push(TreeNode {
                    id: child,
                    statements: vec![Statement::new(&var.name, &var.values[value])],
                    depth: depth + 1,
                    support: group.len() as u64,
                    transitions: Vec::new(),
                    class_counts: None,
                });
                transitions.push(Transition { child, probability });
                queue.push_back((child, group));
            }
            nodes[id].transitions = transitions;
        }

        Ok(ProbabilityTree {
            nodes,
            schema,
            bindings,
            training_rows: records.len() as u64,
            smoothing: alpha,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn bindings(&self) -> &BTreeMap<String, FuzzyBinding> {
        &self.bindings
    }

    pub fn binding(&self, variable: &str) -> Option<&FuzzyBinding> {
        self.bindings.get(variable)
    }

    pub fn training_rows(&self) -> u64 {
        self.training_rows
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// The variable the children of `node` make statements about.
    pub fn branching_variable(&self, node: &TreeNode) -> Option<&SchemaVariable> {
        (!node.is_leaf()).then(|| self.schema.get(node.depth))
    }

    /// Fraction of the leaf's rows in `class`, smoothed if the tree is.
    /// `None` when nothing supports the leaf.
    pub fn leaf_ratio(&self, node: &TreeNode, class: u8) -> Option<f64> {
        let counts = node.class_counts?;
        let total = (counts[0] + counts[1]) as f64 + 2.0 * self.smoothing;
        if counts[0] + counts[1] == 0 && self.smoothing == 0.0 {
            return None;
        }
        Some((counts[usize::from(class)] as f64 + self.smoothing) / total)
    }

    /// One realisation per leaf, in depth-first child order.
    pub fn realisations(&self) -> Vec<Realisation> {
        let mut out = Vec::with_capacity(self.leaves().count());
        let mut path = Vec::new();
        self.collect_realisations(0, 1.0, &mut path, &mut out);
        out
    }

    fn collect_realisations(
        &self,
        id: NodeId,
        probability: f64,
        path: &mut Vec<(Statement, f64)>,
        out: &mut Vec<Realisation>,
    ) {
        let node = &self.nodes[id];
        if node.is_leaf() {
            out.push(Realisation {
                path: path.clone(),
                probability,
                leaf: id,
            });
            return;
        }
        for t in &node.transitions {
            let child = &self.nodes[t.child];
            path.push((child.statements[0].clone(), t.probability));
            self.collect_realisations(t.child, probability * t.probability, path, out);
            path.pop();
        }
    }

    pub fn stats(&self) -> TreeStats {
        let realisations = self.leaves().count();
        TreeStats {
            realisations,
            mean_rows_per_realisation: self.training_rows as f64 / realisations as f64,
            nonzero_leaves: self.leaves().filter(|n| n.support > 0).count(),
            training_rows: self.training_rows,
        }
    }

    /// Resolves a record's cells to value indices, one per schema variable.
    pub fn resolve_record(&self, index: usize, record: &Record) -> Result<Vec<usize>> {
        resolve_record(&self.schema, &self.bindings, index, record)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeDocument::from(self)).expect("tree serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn check_bindings(schema: &Schema, bindings: &BTreeMap<String, FuzzyBinding>) -> Result<()> {
    for (name, binding) in bindings {
        let index = schema
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("fuzzy binding for unknown variable `{name}`")))?;
        if binding.variable() != name {
            return Err(Error::Config(format!(
                "binding keyed `{name}` describes `{}`",
                binding.variable()
            )));
        }
        if schema.get(index).values != binding.term_labels() {
            return Err(Error::Config(format!(
                "values of `{name}` must be its fuzzy terms {:?} in order",
                binding.term_labels()
            )));
        }
    }
    Ok(())
}

fn resolve_record(
    schema: &Schema,
    bindings: &BTreeMap<String, FuzzyBinding>,
    index: usize,
    record: &Record,
) -> Result<Vec<usize>> {
    let row = if record.line > 0 { record.line } else { index };
    let violation = |variable: &str, message: String| Error::SchemaViolation {
        row,
        variable: variable.to_string(),
        message,
    };
    if record.cells.len() != schema.len() {
        return Err(violation(
            "*",
            format!("expected {} cells, found {}", schema.len(), record.cells.len()),
        ));
    }
    if record.label > 1 {
        return Err(violation("class", format!("label {} is not binary", record.label)));
    }
    schema
        .variables()
        .iter()
        .zip(&record.cells)
        .map(|(var, cell)| match cell {
            None => Err(violation(&var.name, "missing value".into())),
            Some(Cell::Level(level)) => var
                .value_index(level)
                .ok_or_else(|| violation(&var.name, format!("`{level}` is outside the declared range"))),
            Some(Cell::Number(x)) => {
                let binding = bindings.get(&var.name).ok_or_else(|| {
                    violation(&var.name, format!("numeric value {x} for a categorical variable"))
                })?;
                let term = binding
                    .resolve(&record.context)
                    .and_then(|lv| lv.crisp_project(*x))
                    .map_err(|e| violation(&var.name, e.to_string()))?;
                Ok(var.value_index(term).expect("terms checked against schema"))
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    schema: Schema,
    #[serde(default)]
    bindings: Vec<FuzzyBinding>,
    training_rows: u64,
    #[serde(default)]
    smoothing: f64,
    root: NodeDocument,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    id: NodeId,
    variable: Option<String>,
    value: Option<String>,
    probability: f64,
    support: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<NodeDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_counts: Option<[u64; 2]>,
}

impl From<&ProbabilityTree> for TreeDocument {
    fn from(tree: &ProbabilityTree) -> Self {
        fn node_doc(tree: &ProbabilityTree, id: NodeId, probability: f64) -> NodeDocument {
            let node = &tree.nodes[id];
            let statement = node.statements.first();
            NodeDocument {
                id,
                variable: statement.map(|s| s.variable.clone()),
                value: statement.map(|s| s.value.clone()),
                probability,
                support: node.support,
                children: (!node.is_leaf()).then(|| {
                    node.transitions
                        .iter()
                        .map(|t| node_doc(tree, t.child, t.probability))
                        .collect()
                }),
                class_counts: node.class_counts,
            }
        }
        TreeDocument {
            schema: tree.schema.clone(),
            bindings: tree.bindings.values().cloned().collect(),
            training_rows: tree.training_rows,
            smoothing: tree.smoothing,
            root: node_doc(tree, 0, 1.0),
        }
    }
}

impl TryFrom<TreeDocument> for ProbabilityTree {
    type Error = Error;

    fn try_from(doc: TreeDocument) -> Result<Self> {
        let bindings: BTreeMap<String, FuzzyBinding> = doc
            .bindings
            .into_iter()
            .map(|b| (b.variable().to_string(), b))
            .collect();
        check_bindings(&doc.schema, &bindings)?;
        let invalid = |message: String| Error::Config(format!("invalid tree document: {message}"));

        let mut slots: Vec<Option<TreeNode>> = Vec::new();
        let mut stack = vec![(doc.root, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            let statements = match (node.variable, node.value) {
                (None, None) if depth == 0 => Vec::new(),
                (Some(variable), Some(value)) if depth > 0 => {
                    let expected = &doc.schema.get(depth - 1);
                    if expected.name != variable {
                        return Err(invalid(format!(
                            "node {} is about `{variable}`, expected `{}`",
                            node.id, expected.name
                        )));
                    }
                    vec![Statement { variable, value }]
                }
                _ => return Err(invalid(format!("node {} has a malformed statement", node.id))),
            };
            let mut transitions = Vec::new();
            match (node.children, node.class_counts) {
                (Some(children), None) if depth < doc.schema.len() => {
                    let var = doc.schema.get(depth);
                    if children.len() != var.values.len() {
                        return Err(invalid(format!(
                            "node {} has {} children, `{}` has {} values",
                            node.id,
                            children.len(),
                            var.name,
                            var.values.len()
                        )));
                    }
                    let total: f64 = children.iter().map(|c| c.probability).sum();
                    if (total - 1.0).abs() > DEGREE_TOLERANCE
                        || children.iter().any(|c| !(c.probability >= 0.0))
                    {
                        return Err(invalid(format!(
                            "transition probabilities of node {} sum to {total}",
                            node.id
                        )));
                    }
                    for (child, value) in children.into_iter().zip(&var.values) {
                        if child.value.as_deref() != Some(value.as_str()) {
                            return Err(invalid(format!(
                                "children of node {} are not in declared value order",
                                node.id
                            )));
                        }
                        transitions.push(Transition {
                            child: child.id,
                            probability: child.probability,
                        });
                        stack.push((child, depth + 1));
                    }
                }
                (None, Some(_)) if depth == doc.schema.len() => {}
                _ => {
                    return Err(invalid(format!(
                        "node {} at depth {depth} must be {}",
                        node.id,
                        if depth == doc.schema.len() { "a leaf" } else { "internal" }
                    )))
                }
            }
            if slots.len() <= node.id {
                slots.resize(node.id + 1, None);
            }
            if slots[node.id].is_some() {
                return Err(invalid(format!("duplicate node id {}", node.id)));
            }
            slots[node.id] = Some(TreeNode {
                id: node.id,
                statements,
                depth,
                support: node.support,
                transitions,
                class_counts: node.class_counts,
            });
        }
        let nodes = slots
            .into_iter()
            .enumerate()
            .map(|(i, n)| n.ok_or_else(|| invalid(format!("node ids are not contiguous, {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        if nodes[0].depth != 0 {
            return Err(invalid("the root must have id 0".into()));
        }
        Ok(ProbabilityTree {
            nodes,
            schema: doc.schema,
            bindings,
            training_rows: doc.training_rows,
            smoothing: doc.smoothing,
        })
    }
}
