//! Error-generation sessions: prompt conditions, trials, claims, and bonus
//! settlement.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adjudication::{AdjudicationResult, AdjudicationStatus};
use crate::classifier::{tokenize, Prediction, SentimentLabel};
use crate::error::{Error, Result};
use crate::explainer::{explain, Explanation};
use crate::ids::{CategoryId, SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::rng;
use crate::store::{Event, Platform};

/// Which prompt aids a session shows: the per-word explanation and/or a
/// pre-filled starting sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PromptCondition {
    pub show_explanation: bool,
    pub starting_point: bool,
}

impl PromptCondition {
    pub const ALL: [PromptCondition; 4] = [
        PromptCondition::new(true, true),
        PromptCondition::new(true, false),
        PromptCondition::new(false, true),
        PromptCondition::new(false, false),
    ];

    pub const fn new(show_explanation: bool, starting_point: bool) -> Self {
        PromptCondition {
            show_explanation,
            starting_point,
        }
    }

    /// Short key such as `LIME+SP` or `noLIME+noSP`.
    pub fn key(self) -> String {
        format!(
            "{}LIME+{}SP",
            if self.show_explanation { "" } else { "no" },
            if self.starting_point { "" } else { "no" }
        )
    }

    pub fn parse_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key().eq_ignore_ascii_case(key))
    }
}

impl fmt::Display for PromptCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartingPoint {
    pub sample_id: SampleId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub target_category: CategoryId,
    pub condition: PromptCondition,
    pub started_at: Timestamp,
    pub seed: u64,
    pub starting_point: Option<StartingPoint>,
    pub trials: Vec<TrialId>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Claim {
    Pending,
    ClaimedWin { asserted: SentimentLabel },
    Continued,
    GivenUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: TrialId,
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub text: String,
    pub submitted_at: Timestamp,
    pub prediction: Prediction,
    pub explanation: Option<Explanation>,
    pub claim: Claim,
    /// Assigned when the trial is claimed and enters validation.
    pub sample_id: Option<SampleId>,
}

/// Monetary amount held in millionths of a dollar; serialized as dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_dollars(d: f64) -> Self {
        Money((d * 1e6).round() as i64)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(self.0 * rhs)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.3}", self.dollars())
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Money::from_dollars)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaymentRates {
    /// Paid for every settled trial.
    pub base: Money,
    /// Added when validation confirms the sentence fools the model.
    pub fail_bonus: Money,
    /// Added on top of `fail_bonus` when the sentence also lands in the
    /// session's target category.
    pub category_bonus: Money,
    /// Paid to validators per recorded judgment.
    pub per_judgment: Money,
}

impl Default for PaymentRates {
    fn default() -> Self {
        PaymentRates {
            base: Money::from_dollars(0.01),
            fail_bonus: Money::from_dollars(0.05),
            category_bonus: Money::from_dollars(0.05),
            per_judgment: Money::from_dollars(0.016),
        }
    }
}

impl PaymentRates {
    pub fn validate(&self) -> Result<()> {
        if [self.base, self.fail_bonus, self.category_bonus, self.per_judgment]
            .iter()
            .any(|m| m.0 < 0)
        {
            return Err(Error::Config("payment rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoutLedgerEntry {
    pub worker_id: WorkerId,
    pub trial_id: TrialId,
    pub base: Money,
    pub fail_bonus: Money,
    pub category_bonus: Money,
}

impl PayoutLedgerEntry {
    pub fn total(&self) -> Money {
        self.base + self.fail_bonus + self.category_bonus
    }
}

/// Ledger entry for one trial. Unclaimed trials earn the base rate only;
/// claimed trials need their adjudication.
pub fn compute_payout(
    trial: &Trial,
    target_category: CategoryId,
    adjudication: Option<&AdjudicationResult>,
    rates: &PaymentRates,
) -> Result<PayoutLedgerEntry> {
    let mut entry = PayoutLedgerEntry {
        worker_id: trial.worker_id.clone(),
        trial_id: trial.trial_id,
        base: rates.base,
        fail_bonus: Money::ZERO,
        category_bonus: Money::ZERO,
    };
    match trial.claim {
        Claim::Pending => return Err(Error::AdjudicationIncomplete(trial.trial_id)),
        Claim::Continued | Claim::GivenUp => {}
        Claim::ClaimedWin { .. } => {
            let result = adjudication.ok_or(Error::AdjudicationIncomplete(trial.trial_id))?;
            if result.status == AdjudicationStatus::ValidatedFailing {
                entry.fail_bonus = rates.fail_bonus;
                if result.category == target_category {
                    entry.category_bonus = rates.category_bonus;
                }
            }
        }
    }
    Ok(entry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSession {
    pub worker_id: WorkerId,
    pub target_category: CategoryId,
    /// Falls back to the configured prompt defaults.
    #[serde(default)]
    pub condition: Option<PromptCondition>,
    /// Seed for the starting-point draw; derived from the platform seed and
    /// session id when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

const SESSION_STREAM: u64 = 0x5e55;

impl Platform {
    /// Validated errors of a category available as starting points, in id
    /// order: misclassified imported sentences plus adjudicated failures.
    pub fn error_pool(&self, category: CategoryId) -> Vec<StartingPoint> {
        let state = self.state();
        let mut pool: Vec<StartingPoint> = state
            .seed_errors
            .values()
            .filter(|e| e.category == Some(category) && e.is_misclassified())
            .map(|e| StartingPoint {
                sample_id: e.sample_id,
                text: e.text.clone(),
            })
            .collect();
        for (sample_id, result) in &state.adjudications {
            if result.status == AdjudicationStatus::ValidatedFailing && result.category == category {
                if let Some(trial) = state.trial_for_sample(*sample_id) {
                    pool.push(StartingPoint {
                        sample_id: *sample_id,
                        text: trial.text.clone(),
                    });
                }
            }
        }
        pool.sort_by_key(|p| p.sample_id);
        pool
    }

    pub fn open_session(&mut self, request: OpenSession, at: Timestamp) -> Result<Session> {
        let category = self
            .state()
            .categories
            .get(&request.target_category)
            .ok_or(Error::CategoryNotFound(request.target_category))?;
        if !category.active {
            return Err(Error::CategoryNotFound(request.target_category));
        }
        let condition = request.condition.unwrap_or(self.config().prompt);
        let session_id = SessionId(self.state().counters.sessions + 1);
        let seed = request
            .seed
            .unwrap_or_else(|| rng::derive_seed(self.config().seed, &[SESSION_STREAM, session_id.0]));
        let starting_point = if condition.starting_point {
            let pool = self.error_pool(request.target_category);
            if pool.is_empty() {
                return Err(Error::NoSeedErrorsAvailable(request.target_category));
            }
            let pick = rng::stream(seed, &[]).random_range(0..pool.len());
            Some(pool[pick].clone())
        } else {
            None
        };
        let session = Session {
            session_id,
            worker_id: request.worker_id,
            target_category: request.target_category,
            condition,
            started_at: at,
            seed,
            starting_point,
            trials: Vec::new(),
            closed: false,
        };
        self.commit(Event::SessionOpened {
            session: session.clone(),
        })?;
        Ok(session)
    }

    pub fn session(&self, id: SessionId) -> Result<&Session> {
        self.state().sessions.get(&id).ok_or(Error::SessionNotFound(id))
    }

    pub fn trial(&self, id: TrialId) -> Result<&Trial> {
        self.state().trials.get(&id).ok_or(Error::TrialNotFound(id))
    }

    /// Runs the model (and the explainer when the session shows
    /// explanations) on a crafted sentence. A still-pending previous trial
    /// of the session is marked as continued.
    pub fn submit_trial(&mut self, session_id: SessionId, text: &str, at: Timestamp) -> Result<Trial> {
        let session = self.session(session_id)?;
        if session.closed {
            return Err(Error::SessionClosed(session_id));
        }
        let last = session
            .trials
            .last()
            .map(|t| self.state().trials[t].submitted_at)
            .unwrap_or(session.started_at);
        let first = session.trials.is_empty();
        if at < last || (!first && at == last) {
            return Err(Error::OutOfOrder { at, last });
        }
        let words = tokenize(text).word_count();
        let min = self.config().min_word_count;
        if words < min {
            return Err(Error::TooShort { words, min });
        }
        let show_explanation = session.condition.show_explanation;
        let worker_id = session.worker_id.clone();
        let previous_pending = session
            .trials
            .last()
            .filter(|t| self.state().trials[t].claim == Claim::Pending)
            .copied();

        let prediction = self.model().predict(text);
        let explanation = if show_explanation {
            Some(explain(self.model(), text, &self.config().explainer)?)
        } else {
            None
        };

        if let Some(prev) = previous_pending {
            self.commit(Event::TrialResolved {
                trial_id: prev,
                claim: Claim::Continued,
                sample_id: None,
                at,
            })?;
        }
        let trial = Trial {
            trial_id: TrialId(self.state().counters.trials + 1),
            session_id,
            worker_id,
            text: text.to_owned(),
            submitted_at: at,
            prediction,
            explanation,
            claim: Claim::Pending,
            sample_id: None,
        };
        self.commit(Event::TrialSubmitted { trial: trial.clone() })?;
        Ok(trial)
    }

    fn pending_trial(&self, trial_id: TrialId) -> Result<&Trial> {
        let trial = self.trial(trial_id)?;
        if trial.claim != Claim::Pending {
            return Err(Error::AlreadyResolved(trial_id));
        }
        Ok(trial)
    }

    /// The worker asserts the model got this sentence wrong and names the
    /// sentiment they believe is correct. The trial enters validation.
    pub fn claim_win(&mut self, trial_id: TrialId, asserted: SentimentLabel, at: Timestamp) -> Result<Trial> {
        let trial = self.pending_trial(trial_id)?;
        if trial.prediction.label == asserted {
            return Err(Error::LabelMatchesPrediction(asserted));
        }
        let sample_id = SampleId(self.state().counters.samples + 1);
        self.commit(Event::TrialResolved {
            trial_id,
            claim: Claim::ClaimedWin { asserted },
            sample_id: Some(sample_id),
            at,
        })?;
        Ok(self.state().trials[&trial_id].clone())
    }

    pub fn continue_trial(&mut self, trial_id: TrialId, at: Timestamp) -> Result<Trial> {
        self.pending_trial(trial_id)?;
        self.commit(Event::TrialResolved {
            trial_id,
            claim: Claim::Continued,
            sample_id: None,
            at,
        })?;
        Ok(self.state().trials[&trial_id].clone())
    }

    /// Marks the trial given up and closes its session.
    pub fn give_up(&mut self, trial_id: TrialId, at: Timestamp) -> Result<Trial> {
        let session_id = self.pending_trial(trial_id)?.session_id;
        self.commit(Event::TrialResolved {
            trial_id,
            claim: Claim::GivenUp,
            sample_id: None,
            at,
        })?;
        self.commit(Event::SessionClosed { session_id, at })?;
        Ok(self.state().trials[&trial_id].clone())
    }

    pub fn close_session(&mut self, session_id: SessionId, at: Timestamp) -> Result<Session> {
        let session = self.session(session_id)?;
        if session.closed {
            return Err(Error::SessionClosed(session_id));
        }
        let pending = session
            .trials
            .last()
            .filter(|t| self.state().trials[t].claim == Claim::Pending)
            .copied();
        if let Some(trial_id) = pending {
            self.commit(Event::TrialResolved {
                trial_id,
                claim: Claim::Continued,
                sample_id: None,
                at,
            })?;
        }
        self.commit(Event::SessionClosed { session_id, at })?;
        Ok(self.state().sessions[&session_id].clone())
    }

    /// Records the payout for a resolved trial. Settling twice returns the
    /// existing entry.
    pub fn settle_bonuses(&mut self, trial_id: TrialId) -> Result<PayoutLedgerEntry> {
        if let Some(entry) = self.state().ledger.get(&trial_id) {
            return Ok(entry.clone());
        }
        let trial = self.trial(trial_id)?;
        let target = self.session(trial.session_id)?.target_category;
        let adjudication = trial.sample_id.and_then(|s| self.state().adjudications.get(&s));
        let entry = compute_payout(trial, target, adjudication, &self.config().payment)?;
        self.commit(Event::BonusSettled { entry: entry.clone() })?;
        Ok(entry)
    }

    /// Settles every resolved trial that is ready; returns how many trials
    /// are still waiting on adjudication.
    pub fn settle_all(&mut self) -> Result<usize> {
        let ids: Vec<TrialId> = self.state().trials.keys().copied().collect();
        let mut waiting = 0;
        for id in ids {
            match self.settle_bonuses(id) {
                Ok(_) => {}
                Err(Error::AdjudicationIncomplete(_)) => waiting += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(waiting)
    }

    pub fn ledger_total(&self) -> Money {
        self.state().ledger.values().map(PayoutLedgerEntry::total).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjudication::AdjudicationStatus;

    fn trial(claim: Claim) -> Trial {
        Trial {
            trial_id: TrialId(1),
            session_id: SessionId(1),
            worker_id: "w".into(),
            text: "x".into(),
            submitted_at: Timestamp(0),
            prediction: Prediction::from_scores([0.1, 0.8, 0.1]),
            explanation: None,
            claim,
            sample_id: Some(SampleId(1)),
        }
    }

    fn result(status: AdjudicationStatus, category: u64) -> AdjudicationResult {
        AdjudicationResult {
            sample_id: SampleId(1),
            status,
            ground_truth: Some(SentimentLabel::Positive),
            conf_human: 0.6,
            category: CategoryId(category),
            judgment_count: 5,
        }
    }

    #[test]
    fn payout_rules() {
        let rates = PaymentRates::default();
        let claimed = trial(Claim::ClaimedWin {
            asserted: SentimentLabel::Positive,
        });
        let total =
            |r: Option<&AdjudicationResult>| compute_payout(&claimed, CategoryId(1), r, &rates).map(|e| e.total());
        assert_eq!(
            total(Some(&result(AdjudicationStatus::ValidatedFailing, 1))).unwrap(),
            Money::from_dollars(0.11)
        );
        assert_eq!(
            total(Some(&result(AdjudicationStatus::ValidatedFailing, 2))).unwrap(),
            Money::from_dollars(0.06)
        );
        assert_eq!(
            total(Some(&result(AdjudicationStatus::ValidatedNotFailing, 1))).unwrap(),
            Money::from_dollars(0.01)
        );
        assert!(matches!(total(None), Err(Error::AdjudicationIncomplete(_))));
        let given_up = compute_payout(&trial(Claim::GivenUp), CategoryId(1), None, &rates).unwrap();
        assert_eq!(given_up.total(), Money::from_dollars(0.01));
        assert!(compute_payout(&trial(Claim::Pending), CategoryId(1), None, &rates).is_err());
    }

    #[test]
    fn money_serializes_as_dollars() {
        assert_eq!(serde_json::to_string(&Money::from_dollars(0.016)).unwrap(), "0.016");
        let m: Money = serde_json::from_str("0.05").unwrap();
        assert_eq!(m, Money(50_000));
        assert_eq!(Money::from_dollars(0.11).to_string(), "$0.110");
    }

    #[test]
    fn condition_keys() {
        for c in PromptCondition::ALL {
            assert_eq!(PromptCondition::parse_key(&c.key()), Some(c));
        }
        assert_eq!(PromptCondition::new(false, false).key(), "noLIME+noSP");
    }
}
