use serde::Serialize;
use thiserror::Error;

use dress_core::assessment::AssessmentError;
use dress_core::insights::InsightsError;
use dress_core::question_bank::BankError;
use dress_core::risk_register::RegisterError;
use dress_core::scoring::ScoringError;
use dress_core::taxonomy::TaxonomyError;
use dress_store::StoreError;

/// Every failure the workflow can report, wrapping the module errors.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Insights(#[from] InsightsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("scan `{0}` is still open")]
    ScanNotClosed(String),
    #[error("{0} already exists")]
    AlreadyExists(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("token may not answer for role {0}")]
    RoleNotPermitted(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        ServiceError::NotFound { what, id: id.into() }
    }

    /// Machine-readable code, mirroring the module error names.
    pub fn code(&self) -> &'static str {
        match self {
            // A label that names no term is an invalid tag on the request.
            ServiceError::Taxonomy(TaxonomyError::UnknownTag(_)) => "InvalidTag",
            ServiceError::Taxonomy(e) => e.code(),
            ServiceError::Bank(e) => e.code(),
            ServiceError::Assessment(e) => e.code(),
            ServiceError::Scoring(e) => e.code(),
            ServiceError::Register(e) => e.code(),
            ServiceError::Insights(e) => e.code(),
            ServiceError::Store(e) => e.code(),
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::NotFound { .. } => "NotFound",
            ServiceError::ScanNotClosed(_) => "ScanNotClosed",
            ServiceError::AlreadyExists(_) => "AlreadyExists",
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::RoleNotPermitted(_) => "RoleNotPermitted",
            ServiceError::Internal(_) => "Internal",
        }
    }

    /// HTTP status: 400 malformed, 401/403 auth, 404 missing entity, 409
    /// state conflicts, 422 domain-invariant violations, 5xx storage.
    pub fn http_status(&self) -> u16 {
        use AssessmentError as A;
        match self {
            ServiceError::BadRequest(_) => 400,
            ServiceError::Bank(BankError::Parse { .. }) => 400,
            ServiceError::Unauthorized => 401,
            ServiceError::RoleNotPermitted(_) => 403,
            ServiceError::NotFound { .. }
            | ServiceError::Store(StoreError::NotFound { .. })
            | ServiceError::Assessment(A::UnknownOrganization(_) | A::UnknownUseCase(_))
            | ServiceError::Register(RegisterError::UnknownScenario(_)) => 404,
            ServiceError::Store(StoreError::VersionConflict { .. } | StoreError::Locked(_))
            | ServiceError::Assessment(A::ScanAlreadyOpen(_) | A::SessionClosed)
            | ServiceError::Register(RegisterError::DuplicateId(_))
            | ServiceError::ScanNotClosed(_)
            | ServiceError::AlreadyExists(_) => 409,
            ServiceError::Store(StoreError::ReadOnly) => 503,
            ServiceError::Store(StoreError::Io(_) | StoreError::Corrupt(_)) | ServiceError::Internal(_) => 500,
            ServiceError::Store(StoreError::PayloadInvalid(_)) => 422,
            ServiceError::Taxonomy(_)
            | ServiceError::Bank(_)
            | ServiceError::Assessment(_)
            | ServiceError::Scoring(_)
            | ServiceError::Register(_)
            | ServiceError::Insights(_) => 422,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            status: self.http_status(),
            code: self.code().to_string(),
            message: self.to_string(),
            detail: self.detail(),
        }
    }

    fn detail(&self) -> Option<String> {
        match self {
            ServiceError::Bank(BankError::Parse { line, .. }) => Some(format!("line {line}")),
            ServiceError::Assessment(AssessmentError::BankNotReleaseGrade(reasons)) => Some(reasons.join("; ")),
            ServiceError::Store(StoreError::VersionConflict { current }) => Some(format!("current version {current}")),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}
