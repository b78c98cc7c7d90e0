// SPDX-License-Identifier: Apache-2.0

//! Machine-readable error records shared by the HTTP service and the CLI.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use twin_core::context::ContextError;
use twin_core::query::QueryError;
use twin_core::store::{BuildError, RepoError, StoreError};
use twin_core::validate::ValidationReport;
use twin_core::writeback::CurationError;

use crate::config::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub rule: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<String>,
}

/// An error with its HTTP status; the CLI maps it to a nonzero exit.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub record: ErrorRecord,
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.record.rule, self.record.message)
    }
}

impl std::error::Error for ApiError {}

#[derive(Serialize)]
struct Envelope<'a> {
    error: &'a ErrorRecord,
}

impl ApiError {
    pub fn new(status: StatusCode, rule: &str, message: impl ToString) -> Self {
        ApiError {
            status,
            record: ErrorRecord {
                rule: rule.into(),
                message: message.to_string(),
                findings: Vec::new(),
            },
        }
    }

    pub fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn not_found(message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-id", message)
    }

    fn with_report(mut self, report: &ValidationReport) -> Self {
        self.record.findings = report.findings.iter().map(ToString::to_string).collect();
        self
    }

    /// `{"error": {...}}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            error: &self.record,
        })
        .expect("serializable")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            [("content-type", "application/json")],
            self.to_json(),
        )
            .into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownSeed(_) | QueryError::UnknownNode(_) => Self::not_found(e),
            QueryError::UnknownRevision(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown-revision", e)
            }
            QueryError::InvalidSpec(_) => Self::new(StatusCode::BAD_REQUEST, "invalid-spec", e),
        }
    }
}

impl From<ContextError> for ApiError {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::BudgetTooSmall { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "budget-too-small", e)
            }
            ContextError::RevisionMismatch { .. } => {
                Self::new(StatusCode::CONFLICT, "revision-mismatch", e)
            }
            ContextError::Parse { .. } => Self::bad_request(e),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::UnknownId(_) => Self::not_found(&e),
            StoreError::Empty => Self::new(StatusCode::CONFLICT, "store-empty", &e),
            StoreError::Invalid(report) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "schema-violation", &e)
                    .with_report(report)
            }
            StoreError::Build(b) => build_status(b, &e.to_string()),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store-fault", &e)
            }
        }
    }
}

fn build_status(b: &BuildError, message: &str) -> ApiError {
    match b {
        BuildError::ParentMismatch { .. } | BuildError::DuplicateRevision(_) => {
            ApiError::new(StatusCode::CONFLICT, "history-conflict", message)
        }
        BuildError::EmptyCommit | BuildError::EmptyHistory => ApiError::bad_request(message),
        BuildError::Extract(_) | BuildError::Ingest { .. } => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "extraction-failed",
            message,
        ),
        BuildError::Invalid(report) => ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "invalid-snapshot",
            message,
        )
        .with_report(report),
        BuildError::Diverged { .. } => ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "rebuild-diverged",
            message,
        ),
    }
}

impl From<BuildError> for ApiError {
    fn from(e: BuildError) -> Self {
        build_status(&e, &e.to_string())
    }
}

impl From<RepoError> for ApiError {
    fn from(e: RepoError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "repo-unreadable", e)
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "config-invalid", e)
    }
}

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        use CurationError as C;
        let e = match e {
            C::Store(s) => return s.into(),
            other => other,
        };
        match &e {
            C::SchemaViolation(report) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "schema-violation", &e)
                    .with_report(report)
            }
            C::DanglingProvenance(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dangling-provenance", &e)
            }
            C::EmptyDelta => Self::new(StatusCode::BAD_REQUEST, "empty-delta", &e),
            C::UnknownProposal(_) | C::UnknownConflict(_) => Self::not_found(&e),
            C::NotPending { .. } => Self::new(StatusCode::CONFLICT, "not-pending", &e),
            C::AcceptFailed { report, .. } => {
                Self::new(StatusCode::CONFLICT, "accept-failed", &e).with_report(report)
            }
            C::DanglingSubject(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dangling-subject", &e)
            }
            C::NoSubjects => Self::bad_request(&e),
            C::Io { .. } | C::Corrupt { .. } | C::Store(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store-fault", &e)
            }
        }
    }
}
