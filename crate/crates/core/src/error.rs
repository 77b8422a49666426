use std::path::PathBuf;

use crate::tree::Statement;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A membership function was evaluated at NaN or an infinity.
    #[error("membership functions are only defined for finite inputs, got {0}")]
    Domain(f64),

    #[error("invalid membership function: {0}")]
    InvalidMembership(String),

    #[error("linguistic variable `{variable}`: {message}")]
    InvalidVariable { variable: String, message: String },

    #[error("operation not supported for `{variable}`: {message}")]
    Unsupported { variable: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Model-spec validation failure, with the 1-based line of the offending
    /// entry when it can be located in the source text.
    #[error("{}", spec_message(.line, .message))]
    Spec { line: Option<usize>, message: String },

    #[error("cannot build a tree from an empty dataset")]
    EmptyDataset,

    #[error("schema violation in row {row}, variable `{variable}`: {message}")]
    SchemaViolation {
        row: usize,
        variable: String,
        message: String,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid query: {0}")]
    Query(String),

    #[error("conditional probability undefined: P({}) = 0", format_conditions(.conditions))]
    UndefinedConditional { conditions: Vec<Statement> },

    #[error("prediction undefined: {0}")]
    UndefinedPrediction(String),

    #[error("stratification requires both classes to be present")]
    Stratification,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn query(message: impl Into<String>) -> Self {
        Error::Query(message.into())
    }

    /// True for the two "no data supports this" failures.
    pub fn is_undefined(&self) -> bool {
        matches!(
            self,
            Error::UndefinedConditional { .. } | Error::UndefinedPrediction(_)
        )
    }
}

fn spec_message(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("model spec line {line}: {message}"),
        None => format!("model spec: {message}"),
    }
}

pub(crate) fn format_conditions(conditions: &[Statement]) -> String {
    if conditions.is_empty() {
        return "TRUE".to_string();
    }
    conditions
        .iter()
        .map(|s| format!("{}={}", s.variable, s.value))
        .collect::<Vec<_>>()
        .join(" AND ")
}
