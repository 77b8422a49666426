//! Fuzzy probability trees.
//!
//! A probability tree is induced from categorical patient data in a fixed
//! variable order. Variables backed by a continuous measurement carry fuzzy
//! sets; at prediction time the measurement's membership degrees split the
//! probability mass across the sibling branches instead of committing to a
//! single crisp category.

pub mod data;
pub mod decision;
pub mod error;
pub mod evaluation;
pub mod fuzzy;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod tree;

pub use data::{Cell, Dataset, Record};
pub use decision::{
    classify, counterfactual, CounterfactualResult, Decision, Setting, Substitution,
};
pub use error::{Error, Result};
pub use fuzzy::{FuzzyBinding, LinguisticVariable, MembershipFunction, Shape, Term};
pub use inference::{
    conditional_probability, event_probability, find_existing_conditions, predict, predict_with,
    Event, PatientQuery, Prediction, Proposition, Weighting,
};
pub use ingest::{load_dataset, IngestReport, ModelSpec};
pub use model::Model;
pub use tree::{ProbabilityTree, Schema, SchemaVariable, Statement, TreeStats};
