use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adjudication::AdjudicationStatus;
use crate::analytics::{
    self, AnalysisSummary, ExportRow, RunSnapshot, SessionRecord, TableFilter, TableRow, TrialRecord,
};
use crate::classifier::{SentimentLabel, SentimentModel};
use crate::config::PlatformConfig;
use crate::error::{Error, Result};
use crate::explainer::{explain, Explanation};
use crate::ids::{CategoryId, SampleId, Timestamp, TrialId, WorkerId};
use crate::pipeline::Claim;

use super::log::{decode_log, encode_header, encode_record, LogWriter};
use super::{Category, Event, SeedError, State, StoredEvent, SEED_CATEGORIES};

/// The single writer over the event log.
pub struct Platform {
    state: State,
    events: Vec<StoredEvent>,
    model: Arc<dyn SentimentModel>,
    writer: Option<LogWriter>,
    /// Post-hoc explanations for trials that were shown none. Not part of
    /// the state: they are a pure function of the model and the config.
    explanations: Mutex<BTreeMap<TrialId, Explanation>>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("events", &self.events.len())
            .field("persistent", &self.writer.is_some())
            .finish()
    }
}

impl Platform {
    /// In-memory platform with the seed categories.
    pub fn new(model: Arc<dyn SentimentModel>, config: PlatformConfig) -> Result<Self> {
        config.validate()?;
        let mut p = Platform::empty(model, config.clone());
        p.commit(Event::Initialized { config })?;
        p.seed_categories()?;
        Ok(p)
    }

    /// New platform persisted to `path`, which must not exist yet.
    pub fn create(model: Arc<dyn SentimentModel>, config: PlatformConfig, path: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let writer = LogWriter::create(path)?;
        let mut p = Platform::empty(model, config.clone());
        p.writer = Some(writer);
        p.commit(Event::Initialized { config })?;
        p.seed_categories()?;
        Ok(p)
    }

    /// Replays an existing log and keeps appending to it. A log without
    /// records (or a zero-length file) is bootstrapped with the default
    /// config and the seed categories.
    pub fn open(model: Arc<dyn SentimentModel>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        if bytes.is_empty() {
            std::fs::write(path, encode_header())?;
        }
        let events = if bytes.is_empty() {
            Vec::new()
        } else {
            decode_log(&bytes)?
        };
        let mut p = Platform::empty(model, PlatformConfig::default());
        p.writer = Some(LogWriter::append_to(path)?);
        if events.is_empty() {
            p.commit(Event::Initialized {
                config: PlatformConfig::default(),
            })?;
            p.seed_categories()?;
        } else {
            p.replay(events)?;
        }
        Ok(p)
    }

    /// Opens `path` if it exists, otherwise creates it with `config`.
    pub fn open_or_create(
        model: Arc<dyn SentimentModel>,
        config: PlatformConfig,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        if path.as_ref().exists() {
            Platform::open(model, path)
        } else {
            Platform::create(model, config, path)
        }
    }

    pub fn from_log_bytes(model: Arc<dyn SentimentModel>, bytes: &[u8]) -> Result<Self> {
        Platform::from_events(model, decode_log(bytes)?)
    }

    /// Rebuilds a platform from its events. No events means a fresh
    /// default platform.
    pub fn from_events(model: Arc<dyn SentimentModel>, events: Vec<StoredEvent>) -> Result<Self> {
        if events.is_empty() {
            return Platform::new(model, PlatformConfig::default());
        }
        let mut p = Platform::empty(model, PlatformConfig::default());
        p.replay(events)?;
        Ok(p)
    }

    fn replay(&mut self, events: Vec<StoredEvent>) -> Result<()> {
        for e in events {
            self.state.apply(e.seq, &e.event)?;
            self.events.push(e);
        }
        Ok(())
    }

    fn empty(model: Arc<dyn SentimentModel>, config: PlatformConfig) -> Self {
        Platform {
            state: State::new(config),
            events: Vec::new(),
            model,
            writer: None,
            explanations: Mutex::new(BTreeMap::new()),
        }
    }

    fn seed_categories(&mut self) -> Result<()> {
        for (name, description) in SEED_CATEGORIES {
            self.create_category(name, description, &WorkerId::new("system"), Timestamp(0))?;
        }
        Ok(())
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.state.config
    }

    pub fn model(&self) -> &dyn SentimentModel {
        self.model.as_ref()
    }

    pub fn model_handle(&self) -> Arc<dyn SentimentModel> {
        Arc::clone(&self.model)
    }

    pub fn events(&self) -> &[StoredEvent] {
        &self.events
    }

    /// The log exactly as it is (or would be) written to disk.
    pub fn log_bytes(&self) -> Vec<u8> {
        let mut out = encode_header();
        for e in &self.events {
            out.extend(encode_record(e));
        }
        out
    }

    /// SHA-256 of the canonical JSON encoding of the state.
    pub fn state_hash(&self) -> String {
        let json = serde_json::to_vec(&self.state).expect("state always serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Latest timestamp recorded so far.
    pub fn clock(&self) -> Timestamp {
        self.state.clock
    }

    /// Applies `event` and appends it to the log. `State::apply` checks
    /// before it mutates, so a rejected event leaves the state untouched.
    pub(crate) fn commit(&mut self, event: Event) -> Result<()> {
        let stored = StoredEvent {
            seq: self.state.next_seq,
            event,
        };
        self.state.apply(stored.seq, &stored.event)?;
        if let Some(w) = self.writer.as_mut() {
            w.append(&stored)?;
        }
        self.events.push(stored);
        Ok(())
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.state.categories.values()
    }

    pub fn category_by_name(&self, name: &str) -> Option<&Category> {
        self.state
            .categories
            .values()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn create_category(
        &mut self,
        name: &str,
        description: &str,
        created_by: &WorkerId,
        at: Timestamp,
    ) -> Result<Category> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Data("category name must not be empty".into()));
        }
        if self.category_by_name(name).is_some() {
            return Err(Error::DuplicateCategory(name.to_owned()));
        }
        let category = Category {
            category_id: CategoryId(self.state.counters.categories + 1),
            name: name.to_owned(),
            description: description.to_owned(),
            created_by: created_by.clone(),
            active: true,
        };
        self.commit(Event::CategoryCreated {
            category: category.clone(),
            at,
        })?;
        Ok(category)
    }

    /// Classifies a labelled benchmark sentence and keeps it as a seed error
    /// when the model gets it wrong. Returns the stored error, if any.
    pub fn import_benchmark_sentence(
        &mut self,
        text: &str,
        human_label: SentimentLabel,
        category: Option<CategoryId>,
        at: Timestamp,
    ) -> Result<Option<SeedError>> {
        if let Some(c) = category {
            if !self.state.categories.contains_key(&c) {
                return Err(Error::CategoryNotFound(c));
            }
        }
        let prediction = self.model.predict(text);
        if prediction.label == human_label {
            return Ok(None);
        }
        let error = SeedError {
            sample_id: SampleId(self.state.counters.samples + 1),
            text: text.to_owned(),
            human_label,
            prediction,
            category,
            imported_at: at,
        };
        self.commit(Event::SeedErrorImported { error: error.clone() })?;
        Ok(Some(error))
    }

    /// Runs `f` at most once per idempotency key. A repeated key with the
    /// same fingerprint replays the stored response; with a different
    /// fingerprint it is a conflict. Failed calls are not recorded.
    pub fn idempotent<T, F>(&mut self, key: Option<&str>, fingerprint: &str, f: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&mut Self) -> Result<T>,
    {
        let Some(key) = key else {
            return f(self);
        };
        if let Some(record) = self.state.idempotency.get(key) {
            if record.fingerprint != fingerprint {
                return Err(Error::IdempotencyConflict(key.to_owned()));
            }
            return serde_json::from_value(record.response.clone()).map_err(|e| Error::Data(e.to_string()));
        }
        let value = f(self)?;
        let response = serde_json::to_value(&value).map_err(|e| Error::Data(e.to_string()))?;
        self.commit(Event::IdempotencyRecorded {
            key: key.to_owned(),
            fingerprint: fingerprint.to_owned(),
            response,
        })?;
        Ok(value)
    }

    /// Read-only view of the run for analytics. Validated failures that
    /// were crafted without an explanation get one computed here.
    pub fn analysis_snapshot(&self) -> Result<RunSnapshot> {
        let state = &self.state;
        let sessions = state
            .sessions
            .values()
            .map(|s| SessionRecord {
                session_id: s.session_id,
                worker_id: s.worker_id.clone(),
                condition: s.condition,
                target_category: s.target_category,
                started_at: s.started_at,
            })
            .collect();
        let mut cache = self.explanations.lock().unwrap_or_else(|e| e.into_inner());
        let mut trials = Vec::with_capacity(state.trials.len());
        for t in state.trials.values() {
            let adjudication = t.sample_id.and_then(|s| state.adjudications.get(&s)).cloned();
            let failing = adjudication
                .as_ref()
                .is_some_and(|a| a.status == AdjudicationStatus::ValidatedFailing);
            let explanation = match (&t.explanation, failing) {
                (Some(e), _) => Some(e.clone()),
                (None, true) => {
                    if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(t.trial_id) {
                        slot.insert(explain(self.model(), &t.text, &state.config.explainer)?);
                    }
                    cache.get(&t.trial_id).cloned()
                }
                (None, false) => None,
            };
            trials.push(TrialRecord {
                trial_id: t.trial_id,
                session_id: t.session_id,
                worker_id: t.worker_id.clone(),
                condition: state.sessions[&t.session_id].condition,
                submitted_at: t.submitted_at,
                text: t.text.clone(),
                prediction: t.prediction.clone(),
                claimed: matches!(t.claim, Claim::ClaimedWin { .. }),
                sample_id: t.sample_id,
                adjudication,
                explanation,
            });
        }
        Ok(RunSnapshot {
            categories: state.categories.values().cloned().collect(),
            sessions,
            trials,
        })
    }

    /// Dashboard payload over everything adjudicated so far. With a
    /// category, the cloud and table are restricted to it.
    pub fn analysis_summary(&self, category: Option<CategoryId>) -> Result<AnalysisSummary> {
        if let Some(c) = category {
            if !self.state.categories.contains_key(&c) {
                return Err(Error::CategoryNotFound(c));
            }
        }
        let snapshot = self.analysis_snapshot()?;
        let config = &self.state.config;
        let mut summary = analytics::summarize_adjudicated(&snapshot, &config.analytics, config.highlight)?;
        if let Some(c) = category {
            summary.cloud = analytics::word_cloud(&snapshot, config.analytics.cloud_threshold, Some(c));
            summary.table.retain(|r| r.category_id == c);
        }
        Ok(summary)
    }

    pub fn analysis_table(&self, filter: &TableFilter) -> Result<Vec<TableRow>> {
        let summary = self.analysis_summary(None)?;
        Ok(filter.apply(&summary.table))
    }

    pub fn export_rows(&self) -> Result<Vec<ExportRow>> {
        Ok(analytics::export_rows(&self.analysis_snapshot()?))
    }
}
