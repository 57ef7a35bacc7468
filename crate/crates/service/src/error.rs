use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gsnkit::codec::CodecError;
use gsnkit::detection::DetectionError;
use gsnkit::instantiation::InstantiationError;
use gsnkit::metrics::{MetricError, RuleError};
use gsnkit::persistence::PersistenceError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// The closed set of machine-readable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    MalformedBody,
    InvalidRequest,
    Unauthorized,
    NotFound,
    ThresholdOutOfRange,
    InvalidRule,
    UnknownMetric,
    InvalidStructure,
    InvalidProject,
    UnknownBackend,
    ProjectExists,
    ProjectLocked,
    CorruptStore,
    BackendUnavailable,
    BackendRefusal,
    ReplyUnparseable,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 17] = [
        ErrorCode::MalformedBody,
        ErrorCode::InvalidRequest,
        ErrorCode::Unauthorized,
        ErrorCode::NotFound,
        ErrorCode::ThresholdOutOfRange,
        ErrorCode::InvalidRule,
        ErrorCode::UnknownMetric,
        ErrorCode::InvalidStructure,
        ErrorCode::InvalidProject,
        ErrorCode::UnknownBackend,
        ErrorCode::ProjectExists,
        ErrorCode::ProjectLocked,
        ErrorCode::CorruptStore,
        ErrorCode::BackendUnavailable,
        ErrorCode::BackendRefusal,
        ErrorCode::ReplyUnparseable,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::MalformedBody
            | ErrorCode::InvalidRequest
            | ErrorCode::ThresholdOutOfRange
            | ErrorCode::InvalidRule
            | ErrorCode::UnknownMetric
            | ErrorCode::UnknownBackend => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::InvalidStructure | ErrorCode::InvalidProject => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::ProjectExists | ErrorCode::ProjectLocked => StatusCode::CONFLICT,
            ErrorCode::BackendUnavailable | ErrorCode::BackendRefusal | ErrorCode::ReplyUnparseable => {
                StatusCode::BAD_GATEWAY
            }
            ErrorCode::CorruptStore | ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, format!("{} not found", what.into()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(ErrorCode::MalformedBody, r.body_text())
    }
}

impl From<RuleError> for ApiError {
    fn from(e: RuleError) -> Self {
        match e {
            RuleError::ThresholdOutOfRange { .. } => ApiError::new(ErrorCode::ThresholdOutOfRange, e.to_string()),
            _ => ApiError::new(ErrorCode::InvalidRule, e.to_string()),
        }
    }
}

impl From<MetricError> for ApiError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::UnknownMetric(_) => ApiError::new(ErrorCode::UnknownMetric, e.to_string()),
            _ => ApiError::new(ErrorCode::InvalidStructure, e.to_string()),
        }
    }
}

impl From<CodecError> for ApiError {
    fn from(e: CodecError) -> Self {
        let CodecError::InvalidStructure(violations) = &e;
        let details = json!({ "violations": violations });
        ApiError::new(ErrorCode::InvalidStructure, e.to_string()).with_details(details)
    }
}

impl From<DetectionError> for ApiError {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::ThresholdOutOfRange(_) => ApiError::new(ErrorCode::ThresholdOutOfRange, e.to_string()),
            DetectionError::Rule(r) => r.into(),
            DetectionError::Metric(m) => m.into(),
            DetectionError::InvalidStructure { ref name, ref source } => {
                let mut err = ApiError::from(source.clone());
                err.message = format!("`{name}`: {}", err.message);
                err
            }
            DetectionError::BackendUnavailable(_) => ApiError::new(ErrorCode::BackendUnavailable, e.to_string()),
            DetectionError::NoCandidates
            | DetectionError::ZeroRuns
            | DetectionError::DuplicateCandidate(_)
            | DetectionError::EmptyGroundTruth(_) => ApiError::new(ErrorCode::InvalidRequest, e.to_string()),
        }
    }
}

impl From<InstantiationError> for ApiError {
    fn from(e: InstantiationError) -> Self {
        match e {
            InstantiationError::MissingInput(_) => ApiError::new(ErrorCode::InvalidRequest, e.to_string()),
            InstantiationError::InvalidPattern(c) => c.into(),
            InstantiationError::BackendUnavailable(_) => ApiError::new(ErrorCode::BackendUnavailable, e.to_string()),
            InstantiationError::BackendRefusal(_) => ApiError::new(ErrorCode::BackendRefusal, e.to_string()),
            InstantiationError::ReplyUnparseable {
                ref raw_reply,
                ref diagnostics,
            } => ApiError::new(ErrorCode::ReplyUnparseable, "backend reply could not be parsed")
                .with_details(json!({ "raw_reply": raw_reply, "diagnostics": diagnostics })),
        }
    }
}

impl From<PersistenceError> for ApiError {
    fn from(e: PersistenceError) -> Self {
        let code = match &e {
            PersistenceError::NotFound(_) => ErrorCode::NotFound,
            PersistenceError::CorruptStore { .. } => ErrorCode::CorruptStore,
            PersistenceError::Locked(_) => ErrorCode::ProjectLocked,
            PersistenceError::InvalidStructure { source, .. } => {
                let mut err = ApiError::from(source.clone());
                err.message = e.to_string();
                return err;
            }
            PersistenceError::InvalidProject(_) => ErrorCode::InvalidProject,
            PersistenceError::StoreUnwritable { .. } | PersistenceError::Io { .. } => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}
