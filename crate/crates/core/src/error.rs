use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::classifier::{ClassifierError, SentimentLabel};
use crate::explainer::ExplainError;
use crate::ids::{CategoryId, SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::store::LogError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("corrupt event log: {0}")]
    CorruptLog(#[from] LogError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("text has {words} words; at least {min} are required")]
    TooShort { words: usize, min: usize },
    #[error("{0} not found")]
    SessionNotFound(SessionId),
    #[error("{0} is closed")]
    SessionClosed(SessionId),
    #[error("{0} not found")]
    TrialNotFound(TrialId),
    #[error("{0} not found")]
    SampleNotFound(SampleId),
    #[error("{0} not found")]
    CategoryNotFound(CategoryId),
    #[error("a category named {0:?} already exists")]
    DuplicateCategory(String),
    #[error("no stored errors available as starting points for {0}")]
    NoSeedErrorsAvailable(CategoryId),
    #[error("timestamp {at:?} precedes the session's last event at {last:?}")]
    OutOfOrder { at: Timestamp, last: Timestamp },
    #[error("the model already predicted {0}; claiming a win needs a different label")]
    LabelMatchesPrediction(SentimentLabel),
    #[error("{0} has already been resolved")]
    AlreadyResolved(TrialId),
    #[error("{0} cannot be settled before its adjudication is complete")]
    AdjudicationIncomplete(TrialId),
    #[error("nothing left for {0} to judge")]
    NothingToJudge(WorkerId),
    #[error("{0} was removed for failing too many test questions")]
    WorkerRejected(WorkerId),
    #[error("{worker} already judged {sample_id}")]
    DuplicateJudgment { sample_id: SampleId, worker: WorkerId },
    #[error("{sample_id} was not assigned to {worker}")]
    UnknownAssignment { sample_id: SampleId, worker: WorkerId },
    #[error("invalid judgment: {0}")]
    InvalidJudgment(String),
    #[error("{sample_id} has {have} accepted judgments; {need} are required")]
    QuorumNotMet {
        sample_id: SampleId,
        have: usize,
        need: usize,
    },
    #[error("{0} is a test question and is never adjudicated")]
    NotAdjudicable(SampleId),
    #[error("idempotency key {0:?} was already used for a different request")]
    IdempotencyConflict(String),
}

/// Coarse classification used by the HTTP layer and the CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    NotFound,
    Conflict,
    Data,
    Internal,
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Classifier(_) => "CLASSIFIER",
            Error::Explain(ExplainError::EmptyText) => "EMPTY_TEXT",
            Error::Explain(_) => "EXPLAINER",
            Error::Analytics(AnalyticsError::AdjudicationPending(_)) => "ADJUDICATION_PENDING",
            Error::Analytics(_) => "ANALYTICS",
            Error::CorruptLog(_) => "CORRUPT_LOG",
            Error::Config(_) => "CONFIG",
            Error::Data(_) => "DATA",
            Error::Io(_) => "IO",
            Error::TooShort { .. } => "TOO_SHORT",
            Error::SessionNotFound(_) => "SESSION_NOT_FOUND",
            Error::SessionClosed(_) => "SESSION_CLOSED",
            Error::TrialNotFound(_) => "TRIAL_NOT_FOUND",
            Error::SampleNotFound(_) => "SAMPLE_NOT_FOUND",
            Error::CategoryNotFound(_) => "CATEGORY_NOT_FOUND",
            Error::DuplicateCategory(_) => "DUPLICATE_CATEGORY",
            Error::NoSeedErrorsAvailable(_) => "NO_SEED_ERRORS_AVAILABLE",
            Error::OutOfOrder { .. } => "OUT_OF_ORDER",
            Error::LabelMatchesPrediction(_) => "LABEL_MATCHES_PREDICTION",
            Error::AlreadyResolved(_) => "ALREADY_RESOLVED",
            Error::AdjudicationIncomplete(_) => "ADJUDICATION_INCOMPLETE",
            Error::NothingToJudge(_) => "NOTHING_TO_JUDGE",
            Error::WorkerRejected(_) => "WORKER_REJECTED",
            Error::DuplicateJudgment { .. } => "DUPLICATE_JUDGMENT",
            Error::UnknownAssignment { .. } => "UNKNOWN_ASSIGNMENT",
            Error::InvalidJudgment(_) => "INVALID_JUDGMENT",
            Error::QuorumNotMet { .. } => "QUORUM_NOT_MET",
            Error::NotAdjudicable(_) => "NOT_ADJUDICABLE",
            Error::IdempotencyConflict(_) => "IDEMPOTENCY_CONFLICT",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::TooShort { .. }
            | Error::Explain(_)
            | Error::LabelMatchesPrediction(_)
            | Error::InvalidJudgment(_)
            | Error::Config(_)
            | Error::Analytics(AnalyticsError::BadWeights { .. })
            | Error::Analytics(AnalyticsError::BadThresholds { .. })
            | Error::Analytics(AnalyticsError::OutOfRange(_))
            | Error::OutOfOrder { .. } => ErrorKind::Invalid,
            Error::SessionNotFound(_)
            | Error::TrialNotFound(_)
            | Error::SampleNotFound(_)
            | Error::CategoryNotFound(_)
            | Error::NothingToJudge(_) => ErrorKind::NotFound,
            Error::SessionClosed(_)
            | Error::DuplicateCategory(_)
            | Error::NoSeedErrorsAvailable(_)
            | Error::AlreadyResolved(_)
            | Error::AdjudicationIncomplete(_)
            | Error::WorkerRejected(_)
            | Error::DuplicateJudgment { .. }
            | Error::UnknownAssignment { .. }
            | Error::QuorumNotMet { .. }
            | Error::NotAdjudicable(_)
            | Error::IdempotencyConflict(_)
            | Error::Analytics(AnalyticsError::AdjudicationPending(_)) => ErrorKind::Conflict,
            Error::Classifier(_) | Error::CorruptLog(_) | Error::Data(_) => ErrorKind::Data,
            Error::Io(_) => ErrorKind::Internal,
        }
    }
}
