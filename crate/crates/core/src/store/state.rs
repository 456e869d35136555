use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::adjudication::{AdjudicationResult, GoldQuestion, Judgment, WorkerQuality};
use crate::classifier::{Prediction, SentimentLabel};
use crate::config::PlatformConfig;
use crate::ids::{CategoryId, JudgmentId, SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::pipeline::{PayoutLedgerEntry, Session, Trial};

use super::{Category, Event, LogError, NO_MAJORITY};

/// A benchmark sentence with a known human label. Only misclassified ones
/// are kept; they seed the starting-point pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedError {
    pub sample_id: SampleId,
    pub text: String,
    pub human_label: SentimentLabel,
    pub prediction: Prediction,
    pub category: Option<CategoryId>,
    pub imported_at: Timestamp,
}

impl SeedError {
    pub fn is_misclassified(&self) -> bool {
        self.prediction.label != self.human_label
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub sessions: u64,
    pub trials: u64,
    pub samples: u64,
    pub judgments: u64,
    pub categories: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdempotencyRecord {
    pub fingerprint: String,
    pub response: serde_json::Value,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub config: PlatformConfig,
    pub next_seq: u64,
    /// Latest timestamp seen on any event.
    pub clock: Timestamp,
    pub counters: Counters,
    pub categories: BTreeMap<CategoryId, Category>,
    pub seed_errors: BTreeMap<SampleId, SeedError>,
    pub gold: BTreeMap<SampleId, GoldQuestion>,
    pub sessions: BTreeMap<SessionId, Session>,
    pub trials: BTreeMap<TrialId, Trial>,
    /// Claimed trials by sample id.
    pub samples: BTreeMap<SampleId, TrialId>,
    pub judgments: BTreeMap<JudgmentId, Judgment>,
    pub rejected_judgments: BTreeSet<JudgmentId>,
    /// Outstanding assignments: sample, worker, assigned at.
    pub assignments: BTreeMap<SampleId, BTreeMap<WorkerId, Timestamp>>,
    pub judged: BTreeMap<SampleId, BTreeMap<WorkerId, JudgmentId>>,
    pub workers: BTreeMap<WorkerId, WorkerQuality>,
    pub adjudications: BTreeMap<SampleId, AdjudicationResult>,
    pub ledger: BTreeMap<TrialId, PayoutLedgerEntry>,
    pub idempotency: BTreeMap<String, IdempotencyRecord>,
}

impl State {
    pub fn new(config: PlatformConfig) -> Self {
        State {
            config,
            next_seq: 0,
            clock: Timestamp(0),
            counters: Counters::default(),
            categories: BTreeMap::new(),
            seed_errors: BTreeMap::new(),
            gold: BTreeMap::new(),
            sessions: BTreeMap::new(),
            trials: BTreeMap::new(),
            samples: BTreeMap::new(),
            judgments: BTreeMap::new(),
            rejected_judgments: BTreeSet::new(),
            assignments: BTreeMap::new(),
            judged: BTreeMap::new(),
            workers: BTreeMap::new(),
            adjudications: BTreeMap::new(),
            ledger: BTreeMap::new(),
            idempotency: BTreeMap::new(),
        }
    }

    pub fn trial_for_sample(&self, sample_id: SampleId) -> Option<&Trial> {
        self.samples.get(&sample_id).and_then(|t| self.trials.get(t))
    }

    pub fn has_seen(&self, sample_id: SampleId, worker: &WorkerId) -> bool {
        self.judged.get(&sample_id).is_some_and(|m| m.contains_key(worker))
            || self.assignments.get(&sample_id).is_some_and(|m| m.contains_key(worker))
    }

    pub fn accepted_judgments(&self, sample_id: SampleId) -> impl Iterator<Item = &Judgment> {
        self.judged
            .get(&sample_id)
            .into_iter()
            .flat_map(|m| m.values())
            .filter(|id| !self.rejected_judgments.contains(id))
            .filter_map(|id| self.judgments.get(id))
    }

    pub fn accepted_count(&self, sample_id: SampleId) -> usize {
        self.accepted_judgments(sample_id).count()
    }

    pub fn pending_count(&self, sample_id: SampleId) -> usize {
        self.assignments.get(&sample_id).map_or(0, BTreeMap::len)
    }

    pub fn no_majority_category(&self) -> CategoryId {
        self.categories
            .values()
            .find(|c| c.name == NO_MAJORITY)
            .map_or(CategoryId(0), |c| c.category_id)
    }

    /// Folds one event into the state. Events that reference unknown
    /// entities are rejected, which catches logs spliced from elsewhere.
    pub fn apply(&mut self, seq: u64, event: &Event) -> Result<(), LogError> {
        let bad = |message: String| LogError::Inconsistent { seq, message };
        if seq != self.next_seq {
            return Err(LogError::Sequence {
                expected: self.next_seq,
                found: seq,
            });
        }
        if matches!(event, Event::Initialized { .. }) != (seq == 0) {
            return Err(bad("initialization must be exactly the first event".into()));
        }
        match event {
            Event::Initialized { config } => *self = State::new(config.clone()),
            Event::CategoryCreated { category, .. } => {
                self.counters.categories = self.counters.categories.max(category.category_id.0);
                self.categories.insert(category.category_id, category.clone());
            }
            Event::SeedErrorImported { error } => {
                self.counters.samples = self.counters.samples.max(error.sample_id.0);
                self.seed_errors.insert(error.sample_id, error.clone());
            }
            Event::GoldQuestionAdded { gold } => {
                self.counters.samples = self.counters.samples.max(gold.sample_id.0);
                self.gold.insert(gold.sample_id, gold.clone());
            }
            Event::SessionOpened { session } => {
                self.counters.sessions = self.counters.sessions.max(session.session_id.0);
                self.sessions.insert(session.session_id, session.clone());
            }
            Event::TrialSubmitted { trial } => {
                let session = self
                    .sessions
                    .get_mut(&trial.session_id)
                    .ok_or_else(|| bad(format!("unknown session {}", trial.session_id)))?;
                session.trials.push(trial.trial_id);
                self.counters.trials = self.counters.trials.max(trial.trial_id.0);
                self.trials.insert(trial.trial_id, trial.clone());
            }
            Event::TrialResolved {
                trial_id,
                claim,
                sample_id,
                ..
            } => {
                let trial = self
                    .trials
                    .get_mut(trial_id)
                    .ok_or_else(|| bad(format!("unknown trial {trial_id}")))?;
                trial.claim = *claim;
                if let Some(s) = sample_id {
                    trial.sample_id = Some(*s);
                    self.samples.insert(*s, *trial_id);
                    self.counters.samples = self.counters.samples.max(s.0);
                }
            }
            Event::SessionClosed { session_id, .. } => {
                self.sessions
                    .get_mut(session_id)
                    .ok_or_else(|| bad(format!("unknown session {session_id}")))?
                    .closed = true;
            }
            Event::TasksAssigned {
                worker_id,
                sample_ids,
                at,
            } => {
                for s in sample_ids {
                    self.assignments.entry(*s).or_default().insert(worker_id.clone(), *at);
                }
            }
            Event::JudgmentRecorded { judgment } => {
                let s = judgment.sample_id;
                if let Some(m) = self.assignments.get_mut(&s) {
                    m.remove(&judgment.worker_id);
                    if m.is_empty() {
                        self.assignments.remove(&s);
                    }
                }
                self.judged
                    .entry(s)
                    .or_default()
                    .insert(judgment.worker_id.clone(), judgment.judgment_id);
                if let Some(gold) = self.gold.get(&s) {
                    let q = self.workers.entry(judgment.worker_id.clone()).or_default();
                    q.gold_answered += 1;
                    if gold.expected.is_satisfied_by(judgment) {
                        q.gold_correct += 1;
                    }
                }
                self.counters.judgments = self.counters.judgments.max(judgment.judgment_id.0);
                self.judgments.insert(judgment.judgment_id, judgment.clone());
            }
            Event::WorkerRejected { worker_id, .. } => {
                self.workers.entry(worker_id.clone()).or_default().rejected = true;
                let mut affected = BTreeSet::new();
                for j in self.judgments.values() {
                    if j.worker_id == *worker_id && !j.is_gold {
                        self.rejected_judgments.insert(j.judgment_id);
                        affected.insert(j.sample_id);
                    }
                }
                for s in affected {
                    self.adjudications.remove(&s);
                    if let Some(t) = self.samples.get(&s) {
                        self.ledger.remove(t);
                    }
                }
                self.assignments.retain(|_, m| {
                    m.remove(worker_id);
                    !m.is_empty()
                });
            }
            Event::SampleAdjudicated { result, .. } => {
                self.adjudications.insert(result.sample_id, result.clone());
            }
            Event::BonusSettled { entry } => {
                if !self.trials.contains_key(&entry.trial_id) {
                    return Err(bad(format!("unknown trial {}", entry.trial_id)));
                }
                self.ledger.insert(entry.trial_id, entry.clone());
            }
            Event::IdempotencyRecorded {
                key,
                fingerprint,
                response,
            } => {
                self.idempotency.insert(
                    key.clone(),
                    IdempotencyRecord {
                        fingerprint: fingerprint.clone(),
                        response: response.clone(),
                    },
                );
            }
        }
        if let Some(at) = event.timestamp() {
            self.clock = self.clock.max(at);
        }
        self.next_seq = seq + 1;
        Ok(())
    }
}
