//! Deterministic simulated crowd.
//!
//! Crafters open sessions, submit sentences, and claim wins on a virtual
//! clock; a separate validator population then judges every claim to
//! quorum. Every random draw comes from a stream derived from the scenario
//! seed, so a scenario always produces the same event log.

mod reference;
mod sentences;

pub use reference::{
    reference_snapshot, replay_reference_run, ReferenceCondition, REFERENCE_CATEGORY_COUNTS, REFERENCE_CONDITIONS,
};
pub use sentences::{Sentence, SentenceBank, NONSENSE, TARGET_CATEGORIES};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::adjudication::{GoldExpectation, JudgmentSubmission};
use crate::classifier::{SentimentLabel, SentimentModel};
use crate::config::PlatformConfig;
use crate::error::{Error, Result};
use crate::ids::{CategoryId, SessionId, Timestamp, TrialId, WorkerId};
use crate::pipeline::{OpenSession, PromptCondition};
use crate::rng;
use crate::store::Platform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditStrategy {
    FromScratch,
    PerturbStartingPoint,
    /// Rewrites the word the explanation weights most heavily.
    ExplanationGuided,
}

impl EditStrategy {
    /// The natural strategy for a prompt condition.
    pub fn for_condition(c: PromptCondition) -> Self {
        if c.show_explanation {
            EditStrategy::ExplanationGuided
        } else if c.starting_point {
            EditStrategy::PerturbStartingPoint
        } else {
            EditStrategy::FromScratch
        }
    }
}

/// Lognormal crafting time per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialTime {
    /// Mean of the distribution, seconds.
    pub mean_secs: f64,
    /// Standard deviation of the underlying normal.
    pub sigma: f64,
}

impl Default for TrialTime {
    fn default() -> Self {
        TrialTime {
            mean_secs: 60.0,
            sigma: 0.6,
        }
    }
}

impl TrialTime {
    fn distribution(self) -> Result<LogNormal<f64>> {
        if !(self.mean_secs > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::Config("trial_time needs mean_secs > 0 and sigma >= 0".into()));
        }
        let mu = self.mean_secs.ln() - self.sigma * self.sigma / 2.0;
        LogNormal::new(mu, self.sigma).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorkerProfile {
    pub worker_id: WorkerId,
    /// Probability that a crafted trial really fools the model.
    pub skill: f64,
    /// Probability that a validation answer matches the oracle.
    pub diligence: f64,
    pub trial_time: TrialTime,
    pub strategy: EditStrategy,
}

impl SimWorkerProfile {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("skill", self.skill), ("diligence", self.diligence)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{}: {name} {p} is outside [0, 1]",
                    self.worker_id
                )));
            }
        }
        self.trial_time.distribution().map(|_| ())
    }
}

/// Scenario file. Every key is optional.
///
/// ```toml
/// seed = 42
/// workers = 20
/// conditions = ["LIME+SP", "noLIME+noSP"]
/// sessions_per_worker = 1
/// trials_per_session = 5
/// trial_budget = 500
/// skill = 0.4
/// trial_time = { mean_secs = 60.0, sigma = 0.6 }
/// validators = 8
/// validator_diligence = 1.0
/// adversarial_validators = 1
/// adversarial_diligence = 0.1
/// gold_questions = 30
/// seed_errors_per_category = 5
///
/// [platform.validation]   # any platform config key; `seed` above wins
/// gold_rate = 0.3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Number of crafters.
    pub workers: usize,
    /// Crafter `i` runs every session under `conditions[i % len]`.
    pub conditions: Vec<String>,
    pub sessions_per_worker: usize,
    pub trials_per_session: usize,
    /// Stop crafting once this many trials exist.
    pub trial_budget: Option<usize>,
    pub skill: f64,
    /// Overrides the strategy implied by each crafter's condition.
    pub strategy: Option<EditStrategy>,
    pub trial_time: TrialTime,
    pub validators: usize,
    pub validator_diligence: f64,
    /// How many of the validators answer with `adversarial_diligence`.
    pub adversarial_validators: usize,
    pub adversarial_diligence: f64,
    pub gold_questions: usize,
    pub seed_errors_per_category: usize,
    pub platform: PlatformConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            workers: 20,
            conditions: vec!["LIME+SP".into(), "noLIME+noSP".into()],
            sessions_per_worker: 1,
            trials_per_session: 5,
            trial_budget: None,
            skill: 0.4,
            strategy: None,
            trial_time: TrialTime::default(),
            validators: 8,
            validator_diligence: 1.0,
            adversarial_validators: 0,
            adversarial_diligence: 0.1,
            gold_questions: 30,
            seed_errors_per_category: 5,
            platform: PlatformConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.conditions()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ScenarioConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn conditions(&self) -> Result<Vec<PromptCondition>> {
        if self.conditions.is_empty() {
            return Err(Error::Config("at least one condition is required".into()));
        }
        self.conditions
            .iter()
            .map(|k| PromptCondition::parse_key(k).ok_or_else(|| Error::Config(format!("unknown condition {k:?}"))))
            .collect()
    }

    /// Crafter profiles followed by validator profiles.
    pub fn profiles(&self) -> Result<(Vec<SimWorkerProfile>, Vec<SimWorkerProfile>)> {
        let conditions = self.conditions()?;
        let crafters = (0..self.workers)
            .map(|i| SimWorkerProfile {
                worker_id: WorkerId(format!("crafter-{:03}", i + 1)),
                skill: self.skill,
                diligence: 1.0,
                trial_time: self.trial_time,
                strategy: self
                    .strategy
                    .unwrap_or_else(|| EditStrategy::for_condition(conditions[i % conditions.len()])),
            })
            .collect::<Vec<_>>();
        let validators = (0..self.validators)
            .map(|i| SimWorkerProfile {
                worker_id: WorkerId(format!("validator-{:03}", i + 1)),
                skill: 0.0,
                diligence: if i < self.adversarial_validators {
                    self.adversarial_diligence
                } else {
                    self.validator_diligence
                },
                trial_time: TrialTime {
                    mean_secs: 20.0,
                    sigma: 0.3,
                },
                strategy: EditStrategy::FromScratch,
            })
            .collect::<Vec<_>>();
        for p in crafters.iter().chain(&validators) {
            p.validate()?;
        }
        let honest = self.validators.saturating_sub(self.adversarial_validators);
        if honest < self.platform.validation.quorum {
            return Err(Error::Config(format!(
                "{honest} non-adversarial validators cannot reach a quorum of {}",
                self.platform.validation.quorum
            )));
        }
        Ok((crafters, validators))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub sessions: usize,
    pub trials: usize,
    pub claims: usize,
    pub judgments: usize,
    pub validated_failing: usize,
    pub rejected_validators: Vec<WorkerId>,
    /// Crafting stopped early because the trial budget ran out.
    pub budget_exhausted: bool,
    /// Trials whose payout could not be settled.
    pub unsettled: usize,
    pub state_hash: String,
}

#[derive(Debug, Clone)]
struct Oracle {
    sensible: bool,
    truth: SentimentLabel,
    category: CategoryId,
}

const BANK_STREAM: u64 = 0xba4c;
const GOLD_STREAM: u64 = 0x601d;
const SKILL_STREAM: u64 = 0x5c11;
const EDIT_STREAM: u64 = 0xed17;
const TIME_STREAM: u64 = 0x7133;
const ANSWER_STREAM: u64 = 0xa45e;
const SESSION_GAP_MS: u64 = 30_000;

struct Crafter {
    index: usize,
    profile: SimWorkerProfile,
    condition: PromptCondition,
    sessions_done: usize,
    session: Option<ActiveSession>,
    clock: Timestamp,
    trial_count: u64,
}

struct ActiveSession {
    id: SessionId,
    target: &'static str,
    draft: Option<Sentence>,
    last_trial: Option<TrialId>,
    trials: usize,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    platform: &'a mut Platform,
    model: Arc<dyn SentimentModel>,
    bank: SentenceBank,
    oracle: HashMap<String, Oracle>,
    categories: HashMap<&'static str, CategoryId>,
    report: SimulationReport,
}

/// Runs a scenario against a freshly created platform.
pub fn run_scenario(platform: &mut Platform, cfg: &ScenarioConfig) -> Result<SimulationReport> {
    let (crafters, validators) = cfg.profiles()?;
    let model = platform.model_handle();
    let bank = SentenceBank::build(model.as_ref(), 60, &mut rng::stream(cfg.seed, &[BANK_STREAM]));
    let mut categories = HashMap::new();
    for name in TARGET_CATEGORIES {
        let id = platform
            .category_by_name(name)
            .map(|c| c.category_id)
            .ok_or_else(|| Error::Config(format!("seed category {name:?} is missing")))?;
        categories.insert(name, id);
    }
    let mut runner = Runner {
        cfg,
        platform,
        model,
        bank,
        oracle: HashMap::new(),
        categories,
        report: SimulationReport::default(),
    };
    runner.import_seed_errors()?;
    runner.add_gold_questions()?;
    let end = runner.craft(crafters)?;
    runner.validate(validators, end)?;
    runner.report.unsettled = runner.platform.settle_all()?;
    runner.report.validated_failing = runner
        .platform
        .state()
        .adjudications
        .values()
        .filter(|a| a.status == crate::adjudication::AdjudicationStatus::ValidatedFailing)
        .count();
    runner.report.state_hash = runner.platform.state_hash();
    Ok(runner.report)
}

impl Runner<'_> {
    fn remember(&mut self, s: &Sentence) {
        let category = self.categories[s.category];
        self.oracle.entry(s.text.clone()).or_insert(Oracle {
            sensible: true,
            truth: s.truth,
            category,
        });
    }

    fn import_seed_errors(&mut self) -> Result<()> {
        for name in TARGET_CATEGORIES {
            let picks: Vec<Sentence> = self
                .bank
                .failing_in(name)
                .into_iter()
                .take(self.cfg.seed_errors_per_category)
                .cloned()
                .collect();
            for s in picks {
                self.platform
                    .import_benchmark_sentence(&s.text, s.truth, Some(self.categories[name]), Timestamp(0))?;
            }
        }
        Ok(())
    }

    fn add_gold_questions(&mut self) -> Result<()> {
        let mut rng = rng::stream(self.cfg.seed, &[GOLD_STREAM]);
        for i in 0..self.cfg.gold_questions {
            if i % 4 == 3 {
                let text = format!("{} {}", NONSENSE[(i / 4) % NONSENSE.len()], i);
                self.oracle.insert(
                    text.clone(),
                    Oracle {
                        sensible: false,
                        truth: SentimentLabel::Neutral,
                        category: CategoryId(0),
                    },
                );
                self.platform.add_gold_question(
                    &text,
                    GoldExpectation {
                        is_english_and_sensible: false,
                        sentiment: None,
                    },
                )?;
            } else {
                let pool = if i % 2 == 0 {
                    &self.bank.passing
                } else {
                    &self.bank.failing
                };
                let Some(s) = pool.choose(&mut rng).cloned() else {
                    continue;
                };
                if self.platform.state().gold.values().any(|g| g.text == s.text) {
                    continue;
                }
                self.remember(&s);
                self.platform.add_gold_question(
                    &s.text,
                    GoldExpectation {
                        is_english_and_sensible: true,
                        sentiment: Some(s.truth),
                    },
                )?;
            }
        }
        Ok(())
    }

    /// Crafting phase; returns the virtual time it ended.
    fn craft(&mut self, profiles: Vec<SimWorkerProfile>) -> Result<Timestamp> {
        let conditions = self.cfg.conditions()?;
        let mut crafters: Vec<Crafter> = profiles
            .into_iter()
            .enumerate()
            .map(|(index, profile)| Crafter {
                index,
                profile,
                condition: conditions[index % conditions.len()],
                sessions_done: 0,
                session: None,
                // Staggered arrivals.
                clock: Timestamp(1_000 * index as u64),
                trial_count: 0,
            })
            .collect();
        let mut queue: BinaryHeap<Reverse<(Timestamp, usize)>> =
            crafters.iter().map(|c| Reverse((c.clock, c.index))).collect();
        let mut end = Timestamp(0);
        while let Some(Reverse((_, i))) = queue.pop() {
            let crafter = &mut crafters[i];
            if self.step(crafter)? {
                queue.push(Reverse((crafter.clock, i)));
            }
            end = end.max(crafter.clock);
        }
        Ok(end)
    }

    /// One action of one crafter. Returns whether they have more to do.
    fn step(&mut self, c: &mut Crafter) -> Result<bool> {
        let budget_left = self.cfg.trial_budget.is_none_or(|b| self.report.trials < b);
        let Some(session) = c.session.as_mut() else {
            if c.sessions_done >= self.cfg.sessions_per_worker || !budget_left {
                if !budget_left {
                    self.report.budget_exhausted = true;
                }
                return Ok(false);
            }
            let target = TARGET_CATEGORIES[(c.index + c.sessions_done) % TARGET_CATEGORIES.len()];
            let opened = self.platform.open_session(
                OpenSession {
                    worker_id: c.profile.worker_id.clone(),
                    target_category: self.categories[target],
                    condition: Some(c.condition),
                    seed: None,
                },
                c.clock,
            )?;
            let draft = opened
                .starting_point
                .as_ref()
                .and_then(|sp| self.bank.find(&sp.text).cloned());
            c.session = Some(ActiveSession {
                id: opened.session_id,
                target,
                draft,
                last_trial: None,
                trials: 0,
            });
            self.report.sessions += 1;
            return Ok(true);
        };
        if !budget_left {
            self.report.budget_exhausted = true;
            self.platform.close_session(session.id, c.clock)?;
            c.session = None;
            c.sessions_done = self.cfg.sessions_per_worker;
            return Ok(false);
        }

        let worker = c.index as u64;
        let n = c.trial_count;
        let duration = c
            .profile
            .trial_time
            .distribution()?
            .sample(&mut rng::stream(self.cfg.seed, &[TIME_STREAM, worker, n]));
        // Whole milliseconds, and never zero so trial times stay ordered.
        c.clock = Timestamp(c.clock.0 + ((duration * 1000.0).round() as u64).max(1));
        let fools = rng::stream(self.cfg.seed, &[SKILL_STREAM, worker, n]).random::<f64>() < c.profile.skill;
        let mut edit = rng::stream(self.cfg.seed, &[EDIT_STREAM, worker, n]);
        let sentence = self.next_sentence(c.profile.strategy, session, fools, &mut edit);
        self.remember(&sentence);

        let trial = self.platform.submit_trial(session.id, &sentence.text, c.clock)?;
        c.trial_count += 1;
        session.trials += 1;
        self.report.trials += 1;
        session.last_trial = Some(trial.trial_id);
        session.draft = Some(sentence.clone());
        let last = session.trials >= self.cfg.trials_per_session;
        if trial.prediction.label != sentence.truth {
            self.platform.claim_win(trial.trial_id, sentence.truth, c.clock)?;
            self.report.claims += 1;
            if last {
                self.platform.close_session(session.id, c.clock)?;
            }
        } else if last {
            self.platform.give_up(trial.trial_id, c.clock)?;
        }
        if last {
            c.session = None;
            c.sessions_done += 1;
            c.clock = Timestamp(c.clock.0 + SESSION_GAP_MS);
        }
        Ok(true)
    }

    fn next_sentence(
        &self,
        strategy: EditStrategy,
        session: &ActiveSession,
        fools: bool,
        rng: &mut impl Rng,
    ) -> Sentence {
        let model = self.model.as_ref();
        let draft = match (strategy, &session.draft) {
            (EditStrategy::FromScratch, _) | (_, None) => self.bank.random_draft(session.target, rng),
            (_, Some(d)) => d.clone(),
        };
        let mut slots: Vec<usize> = (0..draft.slot_count()).collect();
        for i in (1..slots.len()).rev() {
            slots.swap(i, rng.random_range(0..=i));
        }
        if strategy == EditStrategy::ExplanationGuided {
            let top = session
                .last_trial
                .and_then(|t| self.platform.trial(t).ok())
                .and_then(|t| t.explanation.as_ref())
                .and_then(|e| e.top_token().map(|i| e.tokens[i].token.as_str()))
                .and_then(|tok| draft.slot_of(tok));
            if let Some(slot) = top {
                slots.retain(|s| *s != slot);
                slots.insert(0, slot);
            }
        }
        let mut candidates = vec![draft.clone()];
        for &slot in &slots {
            for _ in 0..4 {
                candidates.push(draft.perturb(slot, rng));
            }
        }
        if let Some(s) = candidates.into_iter().find(|s| s.fools(model) == fools) {
            return s;
        }
        let pool: Vec<&Sentence> = if fools {
            let own = self.bank.failing_in(session.target);
            if own.is_empty() {
                self.bank.failing.iter().collect()
            } else {
                own
            }
        } else {
            self.bank.passing.iter().collect()
        };
        pool.choose(rng).map_or(draft, |s| (*s).clone())
    }

    fn answer(&self, profile: &SimWorkerProfile, text: &str, at: Timestamp) -> JudgmentSubmission {
        let oracle = self.oracle.get(text).cloned().unwrap_or(Oracle {
            sensible: true,
            truth: SentimentLabel::Neutral,
            category: self.categories[sentences::OTHERS],
        });
        // Keyed on the text so the same validator answers the same sentence
        // the same way across runs that differ elsewhere.
        let text_key = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
        let vkey = profile
            .worker_id
            .as_str()
            .bytes()
            .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        let mut rng = rng::stream(self.cfg.seed, &[ANSWER_STREAM, vkey, text_key]);
        let diligent = rng.random::<f64>() < profile.diligence;
        let (sensible, sentiment, category) = match (diligent, oracle.sensible) {
            (true, true) => (true, Some(oracle.truth), Some(oracle.category)),
            (true, false) => (false, None, None),
            (false, true) => {
                let wrong: Vec<SentimentLabel> =
                    SentimentLabel::ALL.into_iter().filter(|l| *l != oracle.truth).collect();
                let category = *TARGET_CATEGORIES.choose(&mut rng).expect("non-empty");
                (true, wrong.choose(&mut rng).copied(), Some(self.categories[category]))
            }
            (false, false) => {
                let category = *TARGET_CATEGORIES.choose(&mut rng).expect("non-empty");
                (
                    true,
                    SentimentLabel::ALL.choose(&mut rng).copied(),
                    Some(self.categories[category]),
                )
            }
        };
        JudgmentSubmission {
            judgment_id: None,
            sample_id: crate::ids::SampleId(0),
            worker_id: profile.worker_id.clone(),
            is_english_and_sensible: sensible,
            sentiment,
            category,
            is_gold: None,
            submitted_at: at,
        }
    }

    /// Validators take batches round-robin until nobody has anything left.
    fn validate(&mut self, profiles: Vec<SimWorkerProfile>, start: Timestamp) -> Result<()> {
        let mut clocks: Vec<Timestamp> = (0..profiles.len())
            .map(|i| Timestamp(start.0 + 60_000 + 1_000 * i as u64))
            .collect();
        let mut done = vec![false; profiles.len()];
        while done.iter().any(|d| !d) {
            for (i, profile) in profiles.iter().enumerate() {
                if done[i] {
                    continue;
                }
                let batch = match self.platform.assign_validation_task(&profile.worker_id, clocks[i]) {
                    Ok(b) => b,
                    Err(Error::NothingToJudge(_) | Error::WorkerRejected(_)) => {
                        done[i] = true;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for (k, item) in batch.items.iter().enumerate() {
                    let secs = profile.trial_time.distribution()?.sample(&mut rng::stream(
                        self.cfg.seed,
                        &[TIME_STREAM, 1 << 32 | i as u64, k as u64],
                    ));
                    clocks[i] = Timestamp(clocks[i].0 + ((secs * 1000.0).round() as u64).max(1));
                    let mut submission = self.answer(profile, &item.text, clocks[i]);
                    submission.sample_id = item.sample_id;
                    let outcome = self.platform.record_judgment(submission)?;
                    self.report.judgments += 1;
                    if outcome.worker_rejected {
                        self.report.rejected_validators.push(profile.worker_id.clone());
                        done[i] = true;
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Creates an in-memory platform for `cfg` and runs it.
pub fn simulate(model: Arc<dyn SentimentModel>, cfg: &ScenarioConfig) -> Result<(Platform, SimulationReport)> {
    let mut platform_cfg = cfg.platform.clone();
    platform_cfg.seed = cfg.seed;
    let mut platform = Platform::new(model, platform_cfg)?;
    let report = run_scenario(&mut platform, cfg)?;
    Ok((platform, report))
}

/// Like [`simulate`], persisting the event log to `path`.
pub fn simulate_to_file(
    model: Arc<dyn SentimentModel>,
    cfg: &ScenarioConfig,
    path: impl AsRef<Path>,
) -> Result<(Platform, SimulationReport)> {
    let mut platform_cfg = cfg.platform.clone();
    platform_cfg.seed = cfg.seed;
    let mut platform = Platform::create(model, platform_cfg, path)?;
    let report = run_scenario(&mut platform, cfg)?;
    Ok((platform, report))
}
