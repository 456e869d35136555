//! Severity, robustness and per-worker metrics, and the payloads behind the
//! statistic, cloud and table views.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudication::{AdjudicationResult, AdjudicationStatus};
use crate::classifier::{tokenize, Prediction, SentimentLabel};
use crate::config::AnalyticsConfig;
use crate::explainer::{BucketThresholds, ColorBucket, Explanation, HighlightedToken};
use crate::ids::{CategoryId, SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::pipeline::PromptCondition;
use crate::store::Category;

/// Longest time credited to a single trial.
pub const TRIAL_TIME_CAP_SECS: f64 = 300.0;

/// Header of the adjudicated-dataset export.
pub const EXPORT_HEADER: [&str; 4] = ["Text", "Human_Label", "AI_Label", "Category"];

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("severity weights must be non-negative and sum to 1 (got {human} + {ai})")]
    BadWeights { human: f64, ai: f64 },
    #[error("severity thresholds must satisfy low < high (got {low}, {high})")]
    BadThresholds { low: f64, high: f64 },
    #[error("confidence {0} lies outside [0, 1]")]
    OutOfRange(f64),
    #[error("{0} claimed trials are still awaiting adjudication")]
    AdjudicationPending(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityWeights {
    pub human: f64,
    pub ai: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        SeverityWeights { human: 0.5, ai: 0.5 }
    }
}

impl SeverityWeights {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.human >= 0.0 && self.ai >= 0.0 && (self.human + self.ai - 1.0).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(AnalyticsError::BadWeights {
                human: self.human,
                ai: self.ai,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        SeverityThresholds { low: 0.6, high: 0.8 }
    }
}

impl SeverityThresholds {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.low < self.high {
            Ok(())
        } else {
            Err(AnalyticsError::BadThresholds {
                low: self.low,
                high: self.high,
            })
        }
    }

    pub fn bucket(&self, severity: f64) -> SeverityBucket {
        if severity >= self.high {
            SeverityBucket::High
        } else if severity >= self.low {
            SeverityBucket::Middle
        } else {
            SeverityBucket::Low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityBucket {
    Low,
    Middle,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityScore {
    pub conf_human: f64,
    pub conf_ai: f64,
    pub severity: f64,
    pub bucket: SeverityBucket,
}

/// How embarrassing a misclassification is: a weighted blend of how sure
/// the crowd was and how sure the model was.
pub fn severity(
    conf_human: f64,
    conf_ai: f64,
    weights: SeverityWeights,
    thresholds: SeverityThresholds,
) -> Result<SeverityScore, AnalyticsError> {
    weights.validate()?;
    thresholds.validate()?;
    for c in [conf_human, conf_ai] {
        if !(0.0..=1.0).contains(&c) {
            return Err(AnalyticsError::OutOfRange(c));
        }
    }
    let s = weights.human * conf_human + weights.ai * conf_ai;
    Ok(SeverityScore {
        conf_human,
        conf_ai,
        severity: s,
        bucket: thresholds.bucket(s),
    })
}

/// Share of all validated failures that landed in `category`; zero when
/// nothing was validated.
pub fn robustness<'a>(category: CategoryId, results: impl IntoIterator<Item = &'a AdjudicationResult>) -> f64 {
    let mut valid = 0usize;
    let mut in_category = 0usize;
    for r in results {
        if r.status == AdjudicationStatus::ValidatedFailing {
            valid += 1;
            if r.category == category {
                in_category += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        in_category as f64 / valid as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WorkerEvent {
    SessionStarted { at: Timestamp },
    Trial { at: Timestamp, validated_failing: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker_id: WorkerId,
    pub n_total: usize,
    pub n_valid: usize,
    /// Mean capped seconds per trial.
    pub avg_time_per_trial: f64,
    pub success_rate: f64,
    pub trial_times: Vec<f64>,
}

/// Per-worker time and success metrics from that worker's time-ordered
/// events. Each trial is timed from the previous event (session start or
/// previous trial), capped at five minutes. Returns `None` for a worker
/// with no trials.
pub fn worker_stats(worker_id: &WorkerId, events: &[WorkerEvent]) -> Option<WorkerStats> {
    let mut previous: Option<Timestamp> = None;
    let mut times = Vec::new();
    let mut n_valid = 0;
    for event in events {
        match *event {
            WorkerEvent::SessionStarted { at } => previous = Some(at),
            WorkerEvent::Trial { at, validated_failing } => {
                let gap = previous.map_or(0.0, |p| at.saturating_sub(p));
                times.push(gap.min(TRIAL_TIME_CAP_SECS));
                if validated_failing {
                    n_valid += 1;
                }
                previous = Some(at);
            }
        }
    }
    if times.is_empty() {
        return None;
    }
    let n = times.len();
    Some(WorkerStats {
        worker_id: worker_id.clone(),
        n_total: n,
        n_valid,
        avg_time_per_trial: times.iter().sum::<f64>() / n as f64,
        success_rate: n_valid as f64 / n as f64,
        trial_times: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub condition: PromptCondition,
    pub target_category: CategoryId,
    pub started_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: TrialId,
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub condition: PromptCondition,
    pub submitted_at: Timestamp,
    pub text: String,
    pub prediction: Prediction,
    pub claimed: bool,
    pub sample_id: Option<SampleId>,
    pub adjudication: Option<AdjudicationResult>,
    pub explanation: Option<Explanation>,
}

impl TrialRecord {
    pub fn is_validated_failing(&self) -> bool {
        self.adjudication
            .as_ref()
            .is_some_and(|a| a.status == AdjudicationStatus::ValidatedFailing)
    }
}

/// Immutable view of a run, assembled by the store.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub categories: Vec<Category>,
    pub sessions: Vec<SessionRecord>,
    pub trials: Vec<TrialRecord>,
}

impl RunSnapshot {
    fn category_name(&self, id: CategoryId) -> String {
        self.categories
            .iter()
            .find(|c| c.category_id == id)
            .map_or_else(|| id.to_string(), |c| c.name.clone())
    }

    pub fn pending_adjudications(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.claimed && t.adjudication.is_none())
            .count()
    }

    pub fn adjudications(&self) -> impl Iterator<Item = &AdjudicationResult> {
        self.trials.iter().filter_map(|t| t.adjudication.as_ref())
    }

    pub fn worker_events(&self) -> BTreeMap<WorkerId, Vec<WorkerEvent>> {
        let mut timeline: BTreeMap<WorkerId, Vec<(Timestamp, u8, WorkerEvent)>> = BTreeMap::new();
        for s in &self.sessions {
            timeline.entry(s.worker_id.clone()).or_default().push((
                s.started_at,
                0,
                WorkerEvent::SessionStarted { at: s.started_at },
            ));
        }
        for t in &self.trials {
            timeline.entry(t.worker_id.clone()).or_default().push((
                t.submitted_at,
                1,
                WorkerEvent::Trial {
                    at: t.submitted_at,
                    validated_failing: t.is_validated_failing(),
                },
            ));
        }
        timeline
            .into_iter()
            .map(|(w, mut evs)| {
                evs.sort_by_key(|(at, order, _)| (*at, *order));
                (w, evs.into_iter().map(|(_, _, e)| e).collect())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub condition: PromptCondition,
    pub n_total: usize,
    pub n_valid: usize,
    pub workers: usize,
    /// Mean over workers of T, seconds.
    pub mean_time_per_trial: f64,
    /// Mean over workers of R_succ. Not the same as `n_valid / n_total`.
    pub mean_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_total_trials: usize,
    pub n_validated: usize,
    pub worker_count: usize,
    pub by_condition: Vec<ConditionStats>,
}

impl RunSummary {
    pub fn condition(&self, c: PromptCondition) -> Option<&ConditionStats> {
        self.by_condition.iter().find(|s| s.condition == c)
    }

    pub fn validated_fraction(&self) -> f64 {
        if self.n_total_trials == 0 {
            0.0
        } else {
            self.n_validated as f64 / self.n_total_trials as f64
        }
    }
}

pub fn run_summary(snapshot: &RunSnapshot) -> RunSummary {
    let stats: BTreeMap<WorkerId, WorkerStats> = snapshot
        .worker_events()
        .iter()
        .filter_map(|(w, evs)| worker_stats(w, evs).map(|s| (w.clone(), s)))
        .collect();
    let mut by_condition: BTreeMap<PromptCondition, (usize, usize, BTreeSet<WorkerId>)> = BTreeMap::new();
    for t in &snapshot.trials {
        let e = by_condition.entry(t.condition).or_default();
        e.0 += 1;
        if t.is_validated_failing() {
            e.1 += 1;
        }
        e.2.insert(t.worker_id.clone());
    }
    let workers: BTreeSet<&WorkerId> = snapshot.trials.iter().map(|t| &t.worker_id).collect();
    RunSummary {
        n_total_trials: snapshot.trials.len(),
        n_validated: snapshot.trials.iter().filter(|t| t.is_validated_failing()).count(),
        worker_count: workers.len(),
        by_condition: by_condition
            .into_iter()
            .rev()
            .map(|(condition, (n_total, n_valid, ws))| {
                let per: Vec<&WorkerStats> = ws.iter().filter_map(|w| stats.get(w)).collect();
                let mean = |f: fn(&WorkerStats) -> f64| {
                    if per.is_empty() {
                        0.0
                    } else {
                        per.iter().map(|s| f(s)).sum::<f64>() / per.len() as f64
                    }
                };
                ConditionStats {
                    condition,
                    n_total,
                    n_valid,
                    workers: ws.len(),
                    mean_time_per_trial: mean(|s| s.avg_time_per_trial),
                    mean_success_rate: mean(|s| s.success_rate),
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub low: usize,
    pub middle: usize,
    pub high: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.low + self.middle + self.high
    }

    fn add(&mut self, b: SeverityBucket) {
        match b {
            SeverityBucket::Low => self.low += 1,
            SeverityBucket::Middle => self.middle += 1,
            SeverityBucket::High => self.high += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category_id: CategoryId,
    pub name: String,
    pub counts: BucketCounts,
    pub robustness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub word: String,
    pub frequency: usize,
    pub dominant_class: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub sample_id: SampleId,
    pub trial_id: TrialId,
    pub text: String,
    pub prediction: SentimentLabel,
    pub ground_truth: SentimentLabel,
    pub category_id: CategoryId,
    pub category: String,
    pub severity: SeverityScore,
    pub tokens: Vec<HighlightedToken>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFilter {
    pub category: Option<CategoryId>,
    pub word: Option<String>,
    pub search: Option<String>,
    pub severity: Option<BTreeSet<SeverityBucket>>,
}

impl TableFilter {
    pub fn matches(&self, row: &TableRow) -> bool {
        if self.category.is_some_and(|c| c != row.category_id) {
            return false;
        }
        if let Some(word) = &self.word {
            let word = word.to_lowercase();
            if !row.tokens.iter().any(|t| t.token == word) {
                return false;
            }
        }
        if let Some(q) = &self.search {
            if !row.text.to_lowercase().contains(&q.to_lowercase()) {
                return false;
            }
        }
        if let Some(buckets) = &self.severity {
            if !buckets.contains(&row.severity.bucket) {
                return false;
            }
        }
        true
    }

    pub fn apply<'a>(&self, rows: impl IntoIterator<Item = &'a TableRow>) -> Vec<TableRow> {
        rows.into_iter().filter(|r| self.matches(r)).cloned().collect()
    }
}

/// Everything the dashboard's three views need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub run: RunSummary,
    /// Claimed trials still waiting for their quorum.
    pub pending_adjudications: usize,
    pub categories: Vec<CategorySummary>,
    pub cloud: Vec<CloudEntry>,
    pub table: Vec<TableRow>,
    pub workers: Vec<WorkerStats>,
}

impl AnalysisSummary {
    pub fn category(&self, name: &str) -> Option<&CategorySummary> {
        self.categories.iter().find(|c| c.name == name)
    }
}

fn highlight_tokens(record: &TrialRecord, thresholds: BucketThresholds) -> Vec<HighlightedToken> {
    match record.explanation.as_ref().and_then(|e| e.view(thresholds).ok()) {
        Some(view) => view.tokens,
        None => tokenize(&record.text)
            .tokens
            .into_iter()
            .map(|t| HighlightedToken {
                token: t.text,
                start: t.start,
                end: t.end,
                class: SentimentLabel::Neutral,
                weight: 0.0,
                bucket: ColorBucket::Neutral,
                color: ColorBucket::Neutral.hex().to_owned(),
            })
            .collect(),
    }
}

/// Cloud of words the explanations single out among validated failures,
/// optionally restricted to one category.
pub fn word_cloud(snapshot: &RunSnapshot, threshold: f64, category: Option<CategoryId>) -> Vec<CloudEntry> {
    let mut freq: BTreeMap<String, (usize, [usize; 3])> = BTreeMap::new();
    for t in snapshot.trials.iter().filter(|t| t.is_validated_failing()) {
        let adjudication = t.adjudication.as_ref().expect("validated");
        if category.is_some_and(|c| c != adjudication.category) {
            continue;
        }
        let Some(expl) = &t.explanation else { continue };
        let max = expl.tokens.iter().map(|a| a.weight.abs()).fold(0.0, f64::max);
        if max <= 0.0 {
            continue;
        }
        let mut seen: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for a in &expl.tokens {
            if a.weight.abs() / max >= threshold {
                seen.entry(&a.token).or_default()[a.class.index()] += 1;
            }
        }
        for (word, classes) in seen {
            let e = freq.entry(word.to_owned()).or_default();
            e.0 += 1;
            for (total, n) in e.1.iter_mut().zip(classes) {
                *total += n;
            }
        }
    }
    let mut cloud: Vec<CloudEntry> = freq
        .into_iter()
        .map(|(word, (frequency, classes))| {
            let mut best = 0;
            for c in 1..3 {
                if classes[c] > classes[best] {
                    best = c;
                }
            }
            CloudEntry {
                word,
                frequency,
                dominant_class: SentimentLabel::ALL[best],
            }
        })
        .collect();
    cloud.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.word.cmp(&b.word)));
    cloud
}

/// Builds every view payload. Fails while any claimed trial is still
/// waiting for adjudication.
pub fn summarize(
    snapshot: &RunSnapshot,
    config: &AnalyticsConfig,
    highlight: BucketThresholds,
) -> Result<AnalysisSummary, AnalyticsError> {
    let pending = snapshot.pending_adjudications();
    if pending > 0 {
        return Err(AnalyticsError::AdjudicationPending(pending));
    }
    summarize_adjudicated(snapshot, config, highlight)
}

/// Like [`summarize`], but claims still awaiting adjudication are simply
/// not yet validated. Their number is reported in `pending_adjudications`.
pub fn summarize_adjudicated(
    snapshot: &RunSnapshot,
    config: &AnalyticsConfig,
    highlight: BucketThresholds,
) -> Result<AnalysisSummary, AnalyticsError> {
    let weights = config.weights();
    let thresholds = config.thresholds();
    weights.validate()?;
    thresholds.validate()?;

    let mut table = Vec::new();
    for t in snapshot.trials.iter().filter(|t| t.is_validated_failing()) {
        let a = t.adjudication.as_ref().expect("validated");
        let score = severity(a.conf_human, t.prediction.confidence, weights, thresholds)?;
        table.push(TableRow {
            sample_id: a.sample_id,
            trial_id: t.trial_id,
            text: t.text.clone(),
            prediction: t.prediction.label,
            ground_truth: a.ground_truth.expect("validated samples carry ground truth"),
            category_id: a.category,
            category: snapshot.category_name(a.category),
            severity: score,
            tokens: highlight_tokens(t, highlight),
        });
    }
    table.sort_by_key(|r| r.sample_id);

    let mut counts: BTreeMap<CategoryId, BucketCounts> = BTreeMap::new();
    for row in &table {
        counts.entry(row.category_id).or_default().add(row.severity.bucket);
    }
    let mut ids: BTreeSet<CategoryId> = snapshot
        .categories
        .iter()
        .filter(|c| c.active)
        .map(|c| c.category_id)
        .collect();
    ids.extend(counts.keys().copied());
    let categories = ids
        .into_iter()
        .map(|id| CategorySummary {
            category_id: id,
            name: snapshot.category_name(id),
            counts: counts.get(&id).copied().unwrap_or_default(),
            robustness: robustness(id, snapshot.adjudications()),
        })
        .collect();

    let workers = snapshot
        .worker_events()
        .iter()
        .filter_map(|(w, evs)| worker_stats(w, evs))
        .collect();

    Ok(AnalysisSummary {
        pending_adjudications: snapshot.pending_adjudications(),
        run: run_summary(snapshot),
        categories,
        cloud: word_cloud(snapshot, config.cloud_threshold, None),
        table,
        workers,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub text: String,
    pub human_label: Option<SentimentLabel>,
    pub ai_label: SentimentLabel,
    pub category: Option<String>,
}

/// Adjudicated samples, excluding those rejected as nonsense, in sample order.
pub fn export_rows(snapshot: &RunSnapshot) -> Vec<ExportRow> {
    let mut rows: Vec<(SampleId, ExportRow)> = snapshot
        .trials
        .iter()
        .filter_map(|t| {
            let a = t.adjudication.as_ref()?;
            (a.status != AdjudicationStatus::RejectedNonsense).then(|| {
                (
                    a.sample_id,
                    ExportRow {
                        text: t.text.clone(),
                        human_label: a.ground_truth,
                        ai_label: t.prediction.label,
                        category: Some(snapshot.category_name(a.category)),
                    },
                )
            })
        })
        .collect();
    rows.sort_by_key(|(s, _)| *s);
    rows.into_iter().map(|(_, r)| r).collect()
}

/// Writes `Text,Human_Label,AI_Label,Category` rows. Missing labels and
/// categories are written as empty fields.
pub fn write_export_csv<W: Write>(writer: W, rows: &[ExportRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(EXPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.text.as_str(),
            r.human_label.map_or("", SentimentLabel::as_str),
            r.ai_label.as_str(),
            r.category.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
