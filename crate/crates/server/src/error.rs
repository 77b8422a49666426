use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use fpt_core::{Error, Statement};
use serde::Serialize;
use serde_json::{json, Value};

pub const FINGERPRINT_HEADER: &str = "x-model-fingerprint";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        FieldError {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub fields: Vec<FieldError>,
    pub conditions: Option<Vec<Statement>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
            conditions: None,
        }
    }

    pub fn validation(message: impl Into<String>, fields: Vec<FieldError>) -> Self {
        ApiError {
            fields,
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
        }
    }

    pub fn field(field: &str, message: impl ToString) -> Self {
        let message = message.to_string();
        ApiError::validation(message.clone(), vec![FieldError::new(field, message)])
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not-found", message)
    }

    fn body(&self) -> Value {
        let mut body = json!({ "error": self.code, "message": self.message });
        if !self.fields.is_empty() {
            body["fields"] = json!(self.fields);
        }
        if let Some(conditions) = &self.conditions {
            body["conditions"] = json!(conditions);
        }
        body
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::UndefinedConditional { conditions } => ApiError {
                conditions: Some(conditions),
                ..ApiError::new(StatusCode::CONFLICT, "undefined-conditional", message)
            },
            Error::UndefinedPrediction(_) => ApiError {
                conditions: Some(Vec::new()),
                ..ApiError::new(StatusCode::CONFLICT, "undefined-prediction", message)
            },
            Error::Query(_)
            | Error::Config(_)
            | Error::Domain(_)
            | Error::SchemaViolation { .. }
            | Error::InvalidVariable { .. }
            | Error::InvalidMembership(_)
            | Error::Unsupported { .. }
            | Error::Stratification => ApiError::field("query", message),
            Error::Spec { .. } | Error::MissingColumn(_) | Error::EmptyDataset => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-model", message)
            }
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

/// A JSON response stamped with the fingerprint of the model that served it.
#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub fingerprint: String,
    pub body: Value,
}

impl Reply {
    pub fn new(fingerprint: &str, result: Result<(StatusCode, Value), ApiError>) -> Self {
        let (status, body) = match result {
            Ok(ok) => ok,
            Err(e) => (e.status, e.body()),
        };
        Reply {
            status,
            fingerprint: fingerprint.to_string(),
            body,
        }
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let mut response = (self.status, Json(self.body)).into_response();
        if let Ok(value) = HeaderValue::from_str(&self.fingerprint) {
            response.headers_mut().insert(FINGERPRINT_HEADER, value);
        }
        response
    }
}
