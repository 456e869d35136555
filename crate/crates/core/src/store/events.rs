use serde::{Deserialize, Serialize};

use crate::adjudication::{AdjudicationResult, GoldQuestion, Judgment};
use crate::config::PlatformConfig;
use crate::ids::{SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::pipeline::{Claim, PayoutLedgerEntry, Session, Trial};

use super::{Category, SeedError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Only valid as the first record of a log.
    Initialized {
        config: PlatformConfig,
    },
    CategoryCreated {
        category: Category,
        at: Timestamp,
    },
    SeedErrorImported {
        error: SeedError,
    },
    GoldQuestionAdded {
        gold: GoldQuestion,
    },
    SessionOpened {
        session: Session,
    },
    TrialSubmitted {
        trial: Trial,
    },
    TrialResolved {
        trial_id: TrialId,
        claim: Claim,
        sample_id: Option<SampleId>,
        at: Timestamp,
    },
    SessionClosed {
        session_id: SessionId,
        at: Timestamp,
    },
    TasksAssigned {
        worker_id: WorkerId,
        sample_ids: Vec<SampleId>,
        at: Timestamp,
    },
    JudgmentRecorded {
        judgment: Judgment,
    },
    /// Discards every non-gold judgment of the worker and reopens the
    /// affected samples.
    WorkerRejected {
        worker_id: WorkerId,
        at: Timestamp,
    },
    SampleAdjudicated {
        result: AdjudicationResult,
        at: Timestamp,
    },
    BonusSettled {
        entry: PayoutLedgerEntry,
    },
    IdempotencyRecorded {
        key: String,
        fingerprint: String,
        response: serde_json::Value,
    },
}

impl Event {
    pub fn timestamp(&self) -> Option<Timestamp> {
        match self {
            Event::CategoryCreated { at, .. }
            | Event::TrialResolved { at, .. }
            | Event::SessionClosed { at, .. }
            | Event::TasksAssigned { at, .. }
            | Event::WorkerRejected { at, .. }
            | Event::SampleAdjudicated { at, .. } => Some(*at),
            Event::SeedErrorImported { error } => Some(error.imported_at),
            Event::SessionOpened { session } => Some(session.started_at),
            Event::TrialSubmitted { trial } => Some(trial.submitted_at),
            Event::JudgmentRecorded { judgment } => Some(judgment.submitted_at),
            Event::Initialized { .. }
            | Event::GoldQuestionAdded { .. }
            | Event::BonusSettled { .. }
            | Event::IdempotencyRecorded { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    pub event: Event,
}
