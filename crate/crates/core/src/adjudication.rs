//! Validation and categorization of claimed errors.
//!
//! Each claimed trial becomes a sample that collects judgments from
//! several validators. Once a quorum of accepted judgments exists, the
//! sample is adjudicated by majority vote. Hidden gold questions score every
//! validator, and a validator whose gold accuracy drops below the threshold
//! has all of their judgments discarded.

use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::SentimentLabel;
use crate::error::{Error, Result};
use crate::ids::{CategoryId, JudgmentId, SampleId, Timestamp, WorkerId};
use crate::rng;
use crate::store::{Event, Platform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Judgment {
    pub judgment_id: JudgmentId,
    pub sample_id: SampleId,
    pub worker_id: WorkerId,
    pub is_english_and_sensible: bool,
    pub sentiment: Option<SentimentLabel>,
    pub category: Option<CategoryId>,
    pub is_gold: bool,
    pub submitted_at: Timestamp,
}

/// One line of the judgment ingest format. `judgmentId` and `isGold` are
/// accepted for symmetry with exported judgments but are always assigned by
/// the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgmentSubmission {
    #[serde(default)]
    pub judgment_id: Option<JudgmentId>,
    pub sample_id: SampleId,
    pub worker_id: WorkerId,
    pub is_english_and_sensible: bool,
    #[serde(default)]
    pub sentiment: Option<SentimentLabel>,
    #[serde(default)]
    pub category: Option<CategoryId>,
    #[serde(default)]
    pub is_gold: Option<bool>,
    pub submitted_at: Timestamp,
}

pub fn parse_judgment_lines(input: &str) -> Result<Vec<JudgmentSubmission>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::InvalidJudgment(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjudicationStatus {
    RejectedNonsense,
    ValidatedFailing,
    ValidatedNotFailing,
    NoMajoritySentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationResult {
    pub sample_id: SampleId,
    pub status: AdjudicationStatus,
    pub ground_truth: Option<SentimentLabel>,
    pub conf_human: f64,
    pub category: CategoryId,
    pub judgment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldExpectation {
    pub is_english_and_sensible: bool,
    pub sentiment: Option<SentimentLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldQuestion {
    pub sample_id: SampleId,
    pub text: String,
    pub expected: GoldExpectation,
}

impl GoldExpectation {
    pub fn is_satisfied_by(&self, judgment: &Judgment) -> bool {
        if judgment.is_english_and_sensible != self.is_english_and_sensible {
            return false;
        }
        !self.is_english_and_sensible || self.sentiment.is_none() || judgment.sentiment == self.sentiment
    }
}

#[derive(Debug, Deserialize)]
struct GoldRow {
    text: String,
    expected_sensible: String,
    #[serde(default)]
    expected_sentiment: String,
}

/// Reads a `text,expected_sensible,expected_sentiment` CSV.
pub fn read_gold_csv<R: Read>(reader: R) -> Result<Vec<(String, GoldExpectation)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<GoldRow>() {
        let row = row.map_err(|e| Error::Data(e.to_string()))?;
        let sensible = match row.expected_sensible.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            other => return Err(Error::Data(format!("expected_sensible: {other:?}"))),
        };
        let sentiment = match row.expected_sentiment.trim() {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|e: crate::classifier::ClassifierError| Error::Data(e.to_string()))?,
            ),
        };
        if sensible && sentiment.is_none() {
            return Err(Error::Data(format!("gold question {:?} needs a sentiment", row.text)));
        }
        out.push((
            row.text,
            GoldExpectation {
                is_english_and_sensible: sensible,
                sentiment,
            },
        ));
    }
    Ok(out)
}

/// The option with the strictly highest count, or `None` on a tie for first
/// or an empty vote.
pub fn plurality<T: Ord + Copy>(votes: impl IntoIterator<Item = T>) -> Option<(T, usize)> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let max = *counts.values().max()?;
    let mut leaders = counts.iter().filter(|(_, &c)| c == max);
    let (winner, _) = leaders.next()?;
    if leaders.next().is_some() {
        return None;
    }
    Some((*winner, max))
}

/// Majority-vote adjudication of one sample from its accepted judgments.
pub fn adjudicate_judgments<'a>(
    sample_id: SampleId,
    judgments: impl IntoIterator<Item = &'a Judgment>,
    prediction: SentimentLabel,
    quorum: usize,
    no_majority: CategoryId,
) -> Result<AdjudicationResult> {
    let judgments: Vec<&Judgment> = judgments.into_iter().collect();
    let total = judgments.len();
    if total < quorum {
        return Err(Error::QuorumNotMet {
            sample_id,
            have: total,
            need: quorum,
        });
    }
    let sensible: Vec<&&Judgment> = judgments.iter().filter(|j| j.is_english_and_sensible).collect();
    let category = plurality(sensible.iter().filter_map(|j| j.category)).map_or(no_majority, |(c, _)| c);

    let nonsense = total - sensible.len();
    if 2 * nonsense > total {
        return Ok(AdjudicationResult {
            sample_id,
            status: AdjudicationStatus::RejectedNonsense,
            ground_truth: None,
            conf_human: nonsense as f64 / total as f64,
            category,
            judgment_count: total,
        });
    }

    let sentiments: Vec<SentimentLabel> = sensible.iter().filter_map(|j| j.sentiment).collect();
    let (status, ground_truth, conf_human) = match plurality(sentiments.iter().copied()) {
        Some((label, count)) => {
            let status = if label != prediction {
                AdjudicationStatus::ValidatedFailing
            } else {
                AdjudicationStatus::ValidatedNotFailing
            };
            (status, Some(label), count as f64 / sentiments.len() as f64)
        }
        None => {
            let top = plurality_count(&sentiments);
            let conf = if sentiments.is_empty() {
                0.0
            } else {
                top as f64 / sentiments.len() as f64
            };
            (AdjudicationStatus::NoMajoritySentiment, None, conf)
        }
    };
    Ok(AdjudicationResult {
        sample_id,
        status,
        ground_truth,
        conf_human,
        category,
        judgment_count: total,
    })
}

fn plurality_count(votes: &[SentimentLabel]) -> usize {
    SentimentLabel::ALL
        .iter()
        .map(|l| votes.iter().filter(|v| *v == l).count())
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTask {
    pub sample_id: SampleId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBatch {
    pub worker_id: WorkerId,
    pub items: Vec<ValidationTask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentOutcome {
    pub judgment_id: JudgmentId,
    pub status: AcceptanceStatus,
    /// True when this judgment pushed the worker below the gold threshold.
    pub worker_rejected: bool,
    /// Samples that lost an accepted judgment and went back to the queue.
    pub requeued: Vec<SampleId>,
    pub adjudication: Option<AdjudicationResult>,
}

/// Gold-question record of one validator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerQuality {
    pub gold_answered: usize,
    pub gold_correct: usize,
    pub rejected: bool,
}

impl WorkerQuality {
    pub fn accuracy(&self) -> Option<f64> {
        (self.gold_answered > 0).then(|| self.gold_correct as f64 / self.gold_answered as f64)
    }
}

const ASSIGN_STREAM: u64 = 0xa551;

impl Platform {
    pub fn add_gold_question(&mut self, text: &str, expected: GoldExpectation) -> Result<GoldQuestion> {
        if expected.is_english_and_sensible && expected.sentiment.is_none() {
            return Err(Error::InvalidJudgment(
                "sensible gold questions need a sentiment".into(),
            ));
        }
        let gold = GoldQuestion {
            sample_id: SampleId(self.state().counters.samples + 1),
            text: text.to_owned(),
            expected,
        };
        self.commit(Event::GoldQuestionAdded { gold: gold.clone() })?;
        Ok(gold)
    }

    fn sample_text(&self, sample_id: SampleId) -> Option<&str> {
        let state = self.state();
        state
            .trial_for_sample(sample_id)
            .map(|t| t.text.as_str())
            .or_else(|| state.gold.get(&sample_id).map(|g| g.text.as_str()))
    }

    /// Samples still open to `worker`, in queue order.
    fn eligible_samples(&self, worker: &WorkerId) -> Vec<SampleId> {
        let state = self.state();
        let quorum = self.config().validation.quorum;
        state
            .samples
            .iter()
            .filter(|(sample_id, trial_id)| {
                !state.adjudications.contains_key(sample_id)
                    && state.trials[trial_id].worker_id != *worker
                    && !state.has_seen(**sample_id, worker)
                    && state.accepted_count(**sample_id) + state.pending_count(**sample_id) < quorum
            })
            .map(|(s, _)| *s)
            .collect()
    }

    /// Hands `worker` a batch of samples they have not judged, with gold
    /// questions mixed in at the configured rate.
    pub fn assign_validation_task(&mut self, worker: &WorkerId, at: Timestamp) -> Result<TaskBatch> {
        if self.state().workers.get(worker).is_some_and(|q| q.rejected) {
            return Err(Error::WorkerRejected(worker.clone()));
        }
        let eligible = self.eligible_samples(worker);
        if eligible.is_empty() {
            return Err(Error::NothingToJudge(worker.clone()));
        }
        let cfg = &self.config().validation;
        let mut gold_pool: Vec<SampleId> = self
            .state()
            .gold
            .keys()
            .filter(|g| !self.state().has_seen(**g, worker))
            .copied()
            .collect();
        let mut rng = rng::stream(self.config().seed, &[ASSIGN_STREAM, self.state().next_seq]);
        let mut real = eligible.into_iter();
        let mut picked = Vec::new();
        while picked.len() < cfg.batch_size {
            if !gold_pool.is_empty() && rng.random_bool(cfg.gold_rate) {
                let g = *gold_pool.choose(&mut rng).expect("non-empty");
                gold_pool.retain(|x| *x != g);
                picked.push(g);
            } else if let Some(s) = real.next() {
                picked.push(s);
            } else {
                break;
            }
        }
        let items = picked
            .iter()
            .map(|s| ValidationTask {
                sample_id: *s,
                text: self.sample_text(*s).unwrap_or_default().to_owned(),
            })
            .collect();
        self.commit(Event::TasksAssigned {
            worker_id: worker.clone(),
            sample_ids: picked,
            at,
        })?;
        Ok(TaskBatch {
            worker_id: worker.clone(),
            items,
        })
    }

    pub fn record_judgment(&mut self, submission: JudgmentSubmission) -> Result<JudgmentOutcome> {
        let state = self.state();
        let sample_id = submission.sample_id;
        let worker = submission.worker_id.clone();
        if state.judged.get(&sample_id).is_some_and(|m| m.contains_key(&worker)) {
            return Err(Error::DuplicateJudgment { sample_id, worker });
        }
        if !state
            .assignments
            .get(&sample_id)
            .is_some_and(|m| m.contains_key(&worker))
        {
            return Err(Error::UnknownAssignment { sample_id, worker });
        }
        let answered = submission.sentiment.is_some() && submission.category.is_some();
        let skipped = submission.sentiment.is_none() && submission.category.is_none();
        if (submission.is_english_and_sensible && !answered) || (!submission.is_english_and_sensible && !skipped) {
            return Err(Error::InvalidJudgment(
                "sentiment and category are required exactly when the sentence is sensible".into(),
            ));
        }
        if let Some(c) = submission.category {
            if !state.categories.contains_key(&c) {
                return Err(Error::CategoryNotFound(c));
            }
        }
        let is_gold = state.gold.contains_key(&sample_id);
        let judgment = Judgment {
            judgment_id: JudgmentId(state.counters.judgments + 1),
            sample_id,
            worker_id: worker.clone(),
            is_english_and_sensible: submission.is_english_and_sensible,
            sentiment: submission.sentiment,
            category: submission.category,
            is_gold,
            submitted_at: submission.submitted_at,
        };
        let judgment_id = judgment.judgment_id;
        self.commit(Event::JudgmentRecorded { judgment })?;

        let mut outcome = JudgmentOutcome {
            judgment_id,
            status: AcceptanceStatus::Accepted,
            worker_rejected: false,
            requeued: Vec::new(),
            adjudication: None,
        };
        let cfg = self.config().validation.clone();
        let quality = self.state().workers.get(&worker).cloned().unwrap_or_default();
        if is_gold
            && !quality.rejected
            && quality.gold_answered >= cfg.gold_min_answers
            && quality.accuracy().unwrap_or(1.0) < cfg.gold_accuracy_threshold
        {
            let mut affected: Vec<SampleId> = self
                .state()
                .judgments
                .values()
                .filter(|j| j.worker_id == worker && !j.is_gold)
                .map(|j| j.sample_id)
                .collect();
            affected.sort();
            affected.dedup();
            self.commit(Event::WorkerRejected {
                worker_id: worker.clone(),
                at: submission.submitted_at,
            })?;
            outcome.worker_rejected = true;
            outcome.requeued = affected;
        }
        if self.state().workers.get(&worker).is_some_and(|q| q.rejected) {
            outcome.status = AcceptanceStatus::Rejected;
            return Ok(outcome);
        }
        if !is_gold && self.state().accepted_count(sample_id) >= cfg.quorum {
            outcome.adjudication = Some(self.adjudicate(sample_id, submission.submitted_at)?);
        }
        Ok(outcome)
    }

    /// Adjudicates a sample from its accepted judgments, or returns the
    /// standing result if it already has one.
    pub fn adjudicate(&mut self, sample_id: SampleId, at: Timestamp) -> Result<AdjudicationResult> {
        let state = self.state();
        if let Some(existing) = state.adjudications.get(&sample_id) {
            return Ok(existing.clone());
        }
        if state.gold.contains_key(&sample_id) {
            return Err(Error::NotAdjudicable(sample_id));
        }
        let trial = state
            .trial_for_sample(sample_id)
            .ok_or(Error::SampleNotFound(sample_id))?;
        let result = adjudicate_judgments(
            sample_id,
            state.accepted_judgments(sample_id),
            trial.prediction.label,
            self.config().validation.quorum,
            state.no_majority_category(),
        )?;
        self.commit(Event::SampleAdjudicated {
            result: result.clone(),
            at,
        })?;
        Ok(result)
    }

    pub fn worker_quality(&self, worker: &WorkerId) -> WorkerQuality {
        self.state().workers.get(worker).cloned().unwrap_or_default()
    }

    /// Validator pay: every recorded judgment earns the per-judgment rate.
    pub fn validator_pay(&self) -> BTreeMap<WorkerId, crate::pipeline::Money> {
        let rate = self.config().payment.per_judgment;
        let mut out: BTreeMap<WorkerId, crate::pipeline::Money> = BTreeMap::new();
        for j in self.state().judgments.values() {
            let e = out.entry(j.worker_id.clone()).or_default();
            *e = *e + rate;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::*;

    const NO_MAJORITY: CategoryId = CategoryId(5);

    fn judgment(i: u64, sentiment: Option<SentimentLabel>, category: Option<u64>) -> Judgment {
        Judgment {
            judgment_id: JudgmentId(i),
            sample_id: SampleId(1),
            worker_id: WorkerId(format!("w{i}")),
            is_english_and_sensible: sentiment.is_some(),
            sentiment,
            category: category.map(CategoryId),
            is_gold: false,
            submitted_at: Timestamp(i),
        }
    }

    fn votes(labels: &[SentimentLabel]) -> Vec<Judgment> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| judgment(i as u64, Some(*l), Some(1)))
            .collect()
    }

    #[test]
    fn three_of_five_gives_point_six() {
        let js = votes(&[Positive, Positive, Positive, Negative, Neutral]);
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.status, AdjudicationStatus::ValidatedFailing);
        assert_eq!(r.ground_truth, Some(Positive));
        assert!((r.conf_human - 0.6).abs() < 1e-12);
        assert_eq!(r.category, CategoryId(1));
    }

    #[test]
    fn tie_for_first_has_no_majority() {
        let js = votes(&[Positive, Positive, Negative, Negative, Neutral]);
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.status, AdjudicationStatus::NoMajoritySentiment);
        assert_eq!(r.ground_truth, None);
    }

    #[test]
    fn agreement_with_model_is_not_failing() {
        let js = votes(&[Neutral, Neutral, Neutral, Negative, Neutral]);
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.status, AdjudicationStatus::ValidatedNotFailing);
        assert!((r.conf_human - 0.8).abs() < 1e-12);
    }

    #[test]
    fn nonsense_majority_rejects() {
        let js: Vec<Judgment> = (0..5).map(|i| judgment(i, None, None)).collect();
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.status, AdjudicationStatus::RejectedNonsense);
        assert_eq!(r.category, NO_MAJORITY);

        // Two of five is not a strict majority: the three sensible votes decide.
        let mut js = votes(&[Positive, Positive, Negative]);
        js.push(judgment(8, None, None));
        js.push(judgment(9, None, None));
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.status, AdjudicationStatus::ValidatedFailing);
        assert!((r.conf_human - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn category_ties_go_to_no_majority() {
        let js = vec![
            judgment(0, Some(Positive), Some(1)),
            judgment(1, Some(Positive), Some(1)),
            judgment(2, Some(Positive), Some(2)),
            judgment(3, Some(Positive), Some(2)),
            judgment(4, Some(Positive), Some(3)),
        ];
        let r = adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY).unwrap();
        assert_eq!(r.category, NO_MAJORITY);
    }

    #[test]
    fn quorum_is_enforced() {
        let js = votes(&[Positive, Positive]);
        assert!(matches!(
            adjudicate_judgments(SampleId(1), &js, Neutral, 5, NO_MAJORITY),
            Err(Error::QuorumNotMet { have: 2, need: 5, .. })
        ));
    }

    #[test]
    fn gold_expectations() {
        let exp = GoldExpectation {
            is_english_and_sensible: true,
            sentiment: Some(Positive),
        };
        assert!(exp.is_satisfied_by(&judgment(0, Some(Positive), Some(1))));
        assert!(!exp.is_satisfied_by(&judgment(0, Some(Negative), Some(1))));
        assert!(!exp.is_satisfied_by(&judgment(0, None, None)));
        let nonsense = GoldExpectation {
            is_english_and_sensible: false,
            sentiment: None,
        };
        assert!(nonsense.is_satisfied_by(&judgment(0, None, None)));
    }

    #[test]
    fn gold_csv() {
        let csv = "text,expected_sensible,expected_sentiment\nI love it,true,positive\nasdf qwer,false,\n";
        let rows = read_gold_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].1.sentiment, None);
        assert!(read_gold_csv("text,expected_sensible,expected_sentiment\nx,true,\n".as_bytes()).is_err());
    }

    #[test]
    fn judgment_lines() {
        let input = r#"{"sampleId":3,"workerId":"v1","isEnglishAndSensible":true,"sentiment":"positive","category":1,"submittedAt":10}

{"sampleId":3,"workerId":"v2","isEnglishAndSensible":false,"submittedAt":11,"isGold":true}"#;
        let subs = parse_judgment_lines(input).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].sentiment, Some(Positive));
        assert_eq!(subs[1].category, None);
        assert!(parse_judgment_lines("{nope").is_err());
    }
}
