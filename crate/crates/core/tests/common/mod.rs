//! Reference implementations computed straight from the training rows,
//! sharing no code with the tree or the prediction walk.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fpt_core::data::{Cell, Record};
use fpt_core::fuzzy::{CrispCut, FuzzyBinding, LinguisticVariable, MembershipFunction, Shape};
use fpt_core::inference::{PatientQuery, Proposition};
use fpt_core::tree::{BuildOptions, ProbabilityTree, Schema, SchemaVariable, Statement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fuzzy variable in the oracle's own terms: "1" rises linearly from
/// `low` to `high`, "0" is the complement, crisp cut at `cut`.
#[derive(Debug, Clone, Copy)]
pub struct Ramp {
    pub low: f64,
    pub high: f64,
    pub cut: f64,
}

impl Ramp {
    pub fn positive(&self, x: f64) -> f64 {
        if x <= self.low {
            0.0
        } else if x >= self.high {
            1.0
        } else {
            (x - self.low) / (self.high - self.low)
        }
    }

    pub fn project(&self, x: f64) -> usize {
        usize::from(x >= self.cut)
    }
}

#[derive(Debug, Clone)]
pub struct OracleVar {
    pub name: String,
    pub values: Vec<String>,
    pub ramp: Option<Ramp>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub vars: Vec<OracleVar>,
    pub records: Vec<Record>,
    /// Crisp value of every row, per variable.
    pub symbols: Vec<Vec<String>>,
    pub labels: Vec<u8>,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng, max_depth: usize, max_range: usize) -> Self {
        let depth = rng.random_range(0..=max_depth);
        let vars: Vec<OracleVar> = (0..depth)
            .map(|i| {
                if rng.random_bool(0.4) {
                    let low = rng.random_range(0.0..20.0);
                    let high = low + rng.random_range(0.5..20.0);
                    let cut = rng.random_range(low..=high);
                    OracleVar {
                        name: format!("F{i}"),
                        values: vec!["0".into(), "1".into()],
                        ramp: Some(Ramp { low, high, cut }),
                    }
                } else {
                    let k = rng.random_range(1..=max_range);
                    OracleVar {
                        name: format!("C{i}"),
                        values: (0..k).map(|v| format!("v{v}")).collect(),
                        ramp: None,
                    }
                }
            })
            .collect();
        let n = rng.random_range(1..=24);
        let mut records = Vec::with_capacity(n);
        let mut symbols = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        // skew the cells so some combinations are empty
        let skew: Vec<f64> = vars.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        for line in 0..n {
            let mut cells = Vec::new();
            let mut row = Vec::new();
            for (var, &s) in vars.iter().zip(&skew) {
                match var.ramp {
                    Some(r) => {
                        let x = if rng.random_bool(s) {
                            rng.random_range(r.low - 5.0..r.cut)
                        } else {
                            rng.random_range(r.cut..r.high + 5.0)
                        };
                        cells.push(Some(Cell::Number(x)));
                        row.push(var.values[r.project(x)].clone());
                    }
                    None => {
                        let v = if rng.random_bool(s) { 0 } else { rng.random_range(0..var.values.len()) };
                        cells.push(Some(Cell::level(&var.values[v])));
                        row.push(var.values[v].clone());
                    }
                }
            }
            let label = u8::from(rng.random_bool(0.5));
            records.push(Record {
                id: None,
                line: line + 2,
                cells,
                context: BTreeMap::new(),
                label,
            });
            symbols.push(row);
            labels.push(label);
        }
        Instance {
            vars,
            records,
            symbols,
            labels,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.vars
                .iter()
                .map(|v| SchemaVariable::new(&v.name, v.values.iter().cloned()))
                .collect(),
        )
        .unwrap()
    }

    pub fn bindings(&self) -> BTreeMap<String, FuzzyBinding> {
        self.vars
            .iter()
            .filter_map(|v| {
                let r = v.ramp?;
                let lv = LinguisticVariable::complementary_pair(
                    &v.name,
                    format!("raw_{}", v.name),
                    "0",
                    "1",
                    MembershipFunction::new(Shape::RectTrapezoid, &[r.low, r.high]).unwrap(),
                )
                .unwrap()
                .with_crisp_cut(CrispCut::above(r.cut))
                .unwrap();
                Some((v.name.clone(), FuzzyBinding::single(lv)))
            })
            .collect()
    }

    pub fn tree(&self, smoothing: f64) -> ProbabilityTree {
        ProbabilityTree::build(&self.records, self.schema(), self.bindings(), BuildOptions { smoothing })
            .unwrap()
    }

    /// A query over a random subset of variables, in schema order. Fuzzy
    /// variables get raw values (sometimes a bare term), categorical ones a
    /// declared value or now and then an unseen one.
    pub fn random_query(&self, rng: &mut ChaCha8Rng, presence: f64) -> PatientQuery {
        let mut query = PatientQuery::default();
        for var in &self.vars {
            if !rng.random_bool(presence) {
                continue;
            }
            match var.ramp {
                Some(r) if rng.random_bool(0.85) => {
                    let x = match rng.random_range(0..4) {
                        0 => r.low,
                        1 => r.cut,
                        _ => rng.random_range(r.low - 3.0..r.high + 3.0),
                    };
                    query.raw_values.insert(var.name.clone(), x);
                }
                _ => {
                    let value = if var.ramp.is_none() && rng.random_bool(0.05) {
                        "unseen".to_string()
                    } else {
                        var.values[rng.random_range(0..var.values.len())].clone()
                    };
                    query.statements.push(Statement::new(&var.name, value));
                }
            }
        }
        query.class = u8::from(rng.random_bool(0.5));
        query
    }

    /// Random crisp conditions in schema order.
    pub fn random_conditions(&self, rng: &mut ChaCha8Rng, presence: f64) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            if rng.random_bool(presence) {
                out.push((i, v.values[rng.random_range(0..v.values.len())].clone()));
            }
        }
        out
    }

    /// The same query with every raw value replaced by its crisp term.
    pub fn projected(&self, query: &PatientQuery) -> PatientQuery {
        let mut out = PatientQuery {
            raw_values: BTreeMap::new(),
            ..query.clone()
        };
        for (name, x) in &query.raw_values {
            let var = self.vars.iter().find(|v| &v.name == name).unwrap();
            let r = var.ramp.unwrap();
            out.statements.push(Statement::new(name, &var.values[r.project(*x)]));
        }
        out.statements
            .sort_by_key(|s| self.vars.iter().position(|v| v.name == s.variable).unwrap());
        out
    }

    fn index(&self, name: &str) -> usize {
        self.vars.iter().position(|v| v.name == name).unwrap()
    }

    fn matching(&self, conditions: &[(usize, String)]) -> Vec<usize> {
        (0..self.symbols.len())
            .filter(|&r| conditions.iter().all(|(v, val)| &self.symbols[r][*v] == val))
            .collect()
    }

    /// Share of `class` among rows satisfying every condition.
    pub fn conditional(&self, conditions: &[(usize, String)], class: u8) -> Option<f64> {
        let rows = self.matching(conditions);
        if rows.is_empty() {
            return None;
        }
        let hits = rows.iter().filter(|&&r| self.labels[r] == class).count();
        Some(hits as f64 / rows.len() as f64)
    }

    /// Longest prefix that starts at the first variable, follows schema
    /// order without gaps, and is matched by at least one row.
    pub fn find_existing(&self, statements: &[(usize, String)]) -> Vec<(usize, String)> {
        let mut prefix = Vec::new();
        for (position, (var, value)) in statements.iter().enumerate() {
            if *var != position {
                break;
            }
            let mut candidate = prefix.clone();
            candidate.push((*var, value.clone()));
            if self.matching(&candidate).is_empty() {
                break;
            }
            prefix = candidate;
        }
        prefix
    }

    /// Exhaustive weighted enumeration over the variables up to the last
    /// queried one.
    pub fn brute_force(&self, query: &PatientQuery) -> Option<f64> {
        let mut given: BTreeMap<usize, Given> = BTreeMap::new();
        for s in &query.statements {
            given.insert(self.index(&s.variable), Given::Value(s.value.clone()));
        }
        for (name, x) in &query.raw_values {
            given.insert(self.index(name), Given::Raw(*x));
        }
        let last = given.keys().next_back().map_or(0, |&v| v + 1);
        let mut total = 0.0;
        let mut assignment: Vec<String> = Vec::new();
        self.enumerate(&given, last, &mut assignment, 1.0, query.class, &mut total)?;
        Some(total)
    }

    fn enumerate(
        &self,
        given: &BTreeMap<usize, Given>,
        last: usize,
        assignment: &mut Vec<String>,
        weight: f64,
        class: u8,
        total: &mut f64,
    ) -> Option<()> {
        let depth = assignment.len();
        if depth == last {
            let confirmed: Vec<(usize, String)> = given
                .keys()
                .map(|&v| (v, assignment[v].clone()))
                .collect();
            let full: Vec<(usize, String)> = assignment.iter().cloned().enumerate().collect();
            let value = if depth == self.vars.len() && !self.matching(&full).is_empty() {
                self.conditional(&full, class)?
            } else {
                self.conditional(&self.find_existing(&confirmed), class)?
            };
            *total += weight * value;
            return Some(());
        }
        let var = &self.vars[depth];
        let k = var.values.len();
        let branches: Vec<(String, f64)> = match given.get(&depth) {
            None => var.values.iter().map(|v| (v.clone(), 1.0 / k as f64)).collect(),
            Some(Given::Raw(x)) => {
                let mu = var.ramp.unwrap().positive(*x);
                vec![("0".into(), 1.0 - mu), ("1".into(), mu)]
            }
            Some(Given::Value(v)) => vec![(v.clone(), 1.0)],
        };
        for (value, w) in branches {
            assignment.push(value);
            self.enumerate(given, last, assignment, weight * w, class, total)?;
            assignment.pop();
        }
        Some(())
    }

    /// Crisp walk for a query that states every variable: the leaf's class
    /// share when rows reach it, otherwise the share under the longest
    /// existing prefix.
    pub fn path_prediction(&self, statements: &[Statement], class: u8) -> Option<f64> {
        let path: Vec<(usize, String)> = statements
            .iter()
            .map(|s| (self.index(&s.variable), s.value.clone()))
            .collect();
        assert_eq!(path.len(), self.vars.len(), "full queries only");
        self.conditional(&path, class)
            .or_else(|| self.conditional(&self.find_existing(&path), class))
    }

    /// Share of rows satisfying a proposition.
    pub fn frequency(&self, proposition: &Proposition) -> f64 {
        let hits = (0..self.symbols.len())
            .filter(|&r| self.holds(proposition, r))
            .count();
        hits as f64 / self.symbols.len() as f64
    }

    fn holds(&self, p: &Proposition, row: usize) -> bool {
        match p {
            Proposition::True => true,
            Proposition::Is(s) => self.symbols[row][self.index(&s.variable)] == s.value,
            Proposition::Not(q) => !self.holds(q, row),
            Proposition::And(qs) => qs.iter().all(|q| self.holds(q, row)),
            Proposition::Or(qs) => qs.iter().any(|q| self.holds(q, row)),
        }
    }

    pub fn random_proposition(&self, rng: &mut ChaCha8Rng, depth: usize) -> Proposition {
        if self.vars.is_empty() {
            return Proposition::True;
        }
        let leaf = depth == 0 || rng.random_bool(0.35);
        if leaf {
            let var = &self.vars[rng.random_range(0..self.vars.len())];
            let value = &var.values[rng.random_range(0..var.values.len())];
            return Proposition::is(&var.name, value);
        }
        match rng.random_range(0..3) {
            0 => self.random_proposition(rng, depth - 1).not(),
            1 => Proposition::And(
                (0..rng.random_range(1..=3))
                    .map(|_| self.random_proposition(rng, depth - 1))
                    .collect(),
            ),
            _ => Proposition::Or(
                (0..rng.random_range(1..=3))
                    .map(|_| self.random_proposition(rng, depth - 1))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone)]
enum Given {
    Value(String),
    Raw(f64),
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Queries that state every variable, as crisp statements.
pub fn full_crisp_query(instance: &Instance, rng: &mut ChaCha8Rng) -> PatientQuery {
    let mut query = PatientQuery::default();
    for var in &instance.vars {
        let value = &var.values[rng.random_range(0..var.values.len())];
        query.statements.push(Statement::new(&var.name, value));
    }
    query.class = u8::from(rng.random_bool(0.5));
    query
}

/// `(tp, fp, tn, fn)` with accuracy, sensitivity, specificity, precision
/// worked out by hand; `None` where the denominator is zero.
pub type HandMatrix = ((u64, u64, u64, u64), [Option<f64>; 4]);

pub fn hand_matrices() -> Vec<HandMatrix> {
    vec![
        ((5, 0, 5, 0), [Some(1.0), Some(1.0), Some(1.0), Some(1.0)]),
        ((0, 0, 10, 0), [Some(1.0), None, Some(1.0), None]),
        ((0, 0, 0, 10), [Some(0.0), Some(0.0), None, None]),
        ((10, 0, 0, 0), [Some(1.0), Some(1.0), None, Some(1.0)]),
        ((0, 10, 0, 0), [Some(0.0), None, Some(0.0), Some(0.0)]),
        ((3, 1, 4, 2), [Some(7.0 / 10.0), Some(3.0 / 5.0), Some(4.0 / 5.0), Some(3.0 / 4.0)]),
        ((45, 5, 40, 10), [Some(85.0 / 100.0), Some(45.0 / 55.0), Some(40.0 / 45.0), Some(45.0 / 50.0)]),
        ((1, 1, 1, 1), [Some(0.5), Some(0.5), Some(0.5), Some(0.5)]),
        ((0, 3, 7, 0), [Some(7.0 / 10.0), None, Some(7.0 / 10.0), Some(0.0)]),
        ((0, 0, 0, 0), [None, None, None, None]),
        ((12, 0, 0, 8), [Some(12.0 / 20.0), Some(12.0 / 20.0), None, Some(1.0)]),
        ((0, 4, 0, 6), [Some(0.0), Some(0.0), Some(0.0), Some(0.0)]),
        ((99, 1, 0, 0), [Some(99.0 / 100.0), Some(1.0), Some(0.0), Some(99.0 / 100.0)]),
        ((7, 2, 11, 3), [Some(18.0 / 23.0), Some(7.0 / 10.0), Some(11.0 / 13.0), Some(7.0 / 9.0)]),
        ((50, 50, 50, 50), [Some(0.5), Some(0.5), Some(0.5), Some(0.5)]),
        ((1, 0, 0, 0), [Some(1.0), Some(1.0), None, Some(1.0)]),
        ((0, 0, 1, 0), [Some(1.0), None, Some(1.0), None]),
        ((0, 0, 0, 1), [Some(0.0), Some(0.0), None, None]),
        ((0, 1, 0, 0), [Some(0.0), None, Some(0.0), Some(0.0)]),
        ((26, 14, 47, 13), [Some(73.0 / 100.0), Some(26.0 / 39.0), Some(47.0 / 61.0), Some(26.0 / 40.0)]),
    ]
}
