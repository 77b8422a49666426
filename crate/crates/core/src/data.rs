use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A raw value for one schema variable: a categorical level, or a number
/// for fuzzy-bound variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Level(String),
}

impl Cell {
    pub fn level(value: impl Into<String>) -> Self {
        Cell::Level(value.into())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Number(x) => write!(f, "{x}"),
            Cell::Level(s) => f.write_str(s),
        }
    }
}

/// One patient row. `cells` is aligned with the schema variable order;
/// `None` marks a missing optional value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// 1-based line in the source file (the header is line 1), or the
    /// generation index for synthetic rows.
    pub line: usize,
    pub cells: Vec<Option<Cell>>,
    /// Extra columns consulted by fuzzy-set selectors, e.g. sex.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, String>,
    pub label: u8,
}

impl Record {
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Rows with missing values are kept but flagged.
    pub fn is_flagged(&self) -> bool {
        !self.is_complete()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub variables: Vec<String>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn complete_records(&self) -> Vec<Record> {
        self.records
            .iter()
            .filter(|r| r.is_complete())
            .cloned()
            .collect()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }
}
