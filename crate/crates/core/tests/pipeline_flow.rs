mod common;

use std::collections::BTreeMap;

use failprobe_core::classifier::SentimentLabel::{self, *};
use failprobe_core::crowdsim::{simulate, ScenarioConfig};
use failprobe_core::ids::{CategoryId, SampleId, Timestamp, WorkerId};
use failprobe_core::pipeline::{Claim, Money, OpenSession, PromptCondition};
use failprobe_core::store::Platform;
use failprobe_core::{Error, PlatformConfig};

const SUBTLE: CategoryId = CategoryId(1);
const MIXED: CategoryId = CategoryId(2);

fn platform() -> Platform {
    Platform::new(common::shared_model(), PlatformConfig::default()).unwrap()
}

fn open(p: &mut Platform, worker: &str, condition: PromptCondition, at: u64) -> failprobe_core::pipeline::Session {
    p.open_session(
        OpenSession {
            worker_id: WorkerId::new(worker),
            target_category: SUBTLE,
            condition: Some(condition),
            seed: None,
        },
        Timestamp::from_secs_f64(at as f64),
    )
    .unwrap()
}

const PLAIN: PromptCondition = PromptCondition::new(false, false);
const LIME: PromptCondition = PromptCondition::new(true, false);

#[test]
fn four_word_sentence_is_too_short() {
    let mut p = platform();
    let s = open(&mut p, "w1", LIME, 0);
    let err = p
        .submit_trial(s.session_id, "Is that girl pretty?", Timestamp(1_000))
        .unwrap_err();
    assert!(matches!(err, Error::TooShort { words: 4, min: 5 }));
    assert_eq!(err.code(), "TOO_SHORT");
    let t = p
        .submit_trial(s.session_id, "Is that girl really pretty?", Timestamp(2_000))
        .unwrap();
    assert_eq!(t.claim, Claim::Pending);
    assert!(t.explanation.is_some());
}

#[test]
fn explanation_present_iff_condition_shows_it() {
    let mut p = platform();
    for (i, condition) in [LIME, PLAIN].into_iter().enumerate() {
        let s = open(&mut p, &format!("w{i}"), condition, 0);
        let t = p
            .submit_trial(s.session_id, "The food was excellent and cheap", Timestamp(5_000))
            .unwrap();
        assert_eq!(t.explanation.is_some(), condition.show_explanation);
    }
}

#[test]
fn same_text_same_explanation() {
    let mut p = platform();
    let s = open(&mut p, "w", LIME, 0);
    let a = p
        .submit_trial(s.session_id, "The service was not good at all", Timestamp(1_000))
        .unwrap();
    let b = p
        .submit_trial(s.session_id, "The service was not good at all", Timestamp(2_000))
        .unwrap();
    assert_eq!(a.explanation, b.explanation);
    assert_eq!(p.trial(a.trial_id).unwrap().claim, Claim::Continued);
}

#[test]
fn claim_rules() {
    let mut p = platform();
    let s = open(&mut p, "w", PLAIN, 0);
    let t = p
        .submit_trial(s.session_id, "I would not call the food excellent", Timestamp(1_000))
        .unwrap();
    let predicted = t.prediction.label;
    assert!(matches!(
        p.claim_win(t.trial_id, predicted, Timestamp(2_000)),
        Err(Error::LabelMatchesPrediction(_))
    ));
    let other = SentimentLabel::ALL.into_iter().find(|l| *l != predicted).unwrap();
    let claimed = p.claim_win(t.trial_id, other, Timestamp(2_000)).unwrap();
    assert!(claimed.sample_id.is_some());
    assert!(matches!(
        p.claim_win(t.trial_id, other, Timestamp(3_000)),
        Err(Error::AlreadyResolved(_))
    ));

    let t2 = p
        .submit_trial(s.session_id, "The meal was fine and warm", Timestamp(4_000))
        .unwrap();
    p.continue_trial(t2.trial_id, Timestamp(5_000)).unwrap();
    assert!(matches!(
        p.claim_win(t2.trial_id, other, Timestamp(6_000)),
        Err(Error::AlreadyResolved(_))
    ));
}

#[test]
fn trials_must_be_time_ordered_and_sessions_open() {
    let mut p = platform();
    let s = open(&mut p, "w", PLAIN, 10);
    assert!(matches!(
        p.submit_trial(s.session_id, "one two three four five", Timestamp(5_000)),
        Err(Error::OutOfOrder { .. })
    ));
    let t = p
        .submit_trial(s.session_id, "one two three four five", Timestamp(11_000))
        .unwrap();
    assert!(matches!(
        p.submit_trial(s.session_id, "one two three four five", Timestamp(11_000)),
        Err(Error::OutOfOrder { .. })
    ));
    p.give_up(t.trial_id, Timestamp(12_000)).unwrap();
    assert!(matches!(
        p.submit_trial(s.session_id, "one two three four five", Timestamp(13_000)),
        Err(Error::SessionClosed(_))
    ));
}

fn import_errors(p: &mut Platform, category: CategoryId, n: usize) -> Vec<SampleId> {
    // Every variant negates a positive adjective, which the stand-in model
    // reads as positive.
    let adjectives = [
        "excellent",
        "great",
        "wonderful",
        "good",
        "impressive",
        "pleasant",
        "fantastic",
        "lovely",
        "solid",
        "amazing",
        "delightful",
        "brilliant",
    ];
    let mut ids = Vec::new();
    for adj in adjectives.iter().take(n) {
        let text = format!("I would not call the food {adj} at all");
        let stored = p
            .import_benchmark_sentence(&text, Negative, Some(category), Timestamp(0))
            .unwrap()
            .expect("misclassified");
        ids.push(stored.sample_id);
    }
    ids
}

#[test]
fn starting_point_sampling_is_uniform() {
    let mut p = platform();
    let ids = import_errors(&mut p, SUBTLE, 10);
    let mut counts: BTreeMap<SampleId, usize> = BTreeMap::new();
    for i in 0..10_000u64 {
        let s = p
            .open_session(
                OpenSession {
                    worker_id: WorkerId::new("w"),
                    target_category: SUBTLE,
                    condition: Some(PromptCondition::new(true, true)),
                    seed: Some(i),
                },
                Timestamp(i),
            )
            .unwrap();
        *counts.entry(s.starting_point.unwrap().sample_id).or_default() += 1;
    }
    assert_eq!(counts.keys().copied().collect::<Vec<_>>(), ids);
    for (id, n) in counts {
        assert!((850..=1150).contains(&n), "{id}: {n}");
    }
}

#[test]
fn starting_point_edge_cases() {
    let mut p = platform();
    let sp = PromptCondition::new(false, true);
    let req = |c| OpenSession {
        worker_id: WorkerId::new("w"),
        target_category: c,
        condition: Some(sp),
        seed: None,
    };
    assert!(matches!(
        p.open_session(req(MIXED), Timestamp(0)),
        Err(Error::NoSeedErrorsAvailable(MIXED))
    ));
    let only = import_errors(&mut p, MIXED, 1)[0];
    for i in 0..20 {
        let s = p.open_session(req(MIXED), Timestamp(i)).unwrap();
        assert_eq!(s.starting_point.unwrap().sample_id, only);
    }
    let no_sp = open(&mut p, "w", PLAIN, 0);
    assert!(no_sp.starting_point.is_none());
}

#[test]
fn plain_condition_never_computes_explanations() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    let calls = Arc::new(AtomicUsize::new(0));
    let inner = common::fixture_model();
    let counter = Arc::clone(&calls);
    let model = move |text: &str| {
        counter.fetch_add(1, Ordering::SeqCst);
        failprobe_core::SentimentModel::predict(inner.as_ref(), text)
    };
    let cfg = ScenarioConfig {
        seed: 3,
        workers: 6,
        conditions: vec!["noLIME+noSP".into()],
        ..ScenarioConfig::default()
    };
    let (platform, report) = simulate(Arc::new(model), &cfg).unwrap();
    assert!(platform.state().trials.values().all(|t| t.explanation.is_none()));
    // One prediction per submitted trial plus the simulator's own oracle
    // checks; an explanation would add hundreds per trial.
    let per_trial = calls.load(Ordering::SeqCst) as f64 / report.trials as f64;
    assert!(per_trial < 100.0, "{per_trial} model calls per trial");
}

#[test]
fn ledger_matches_closed_form_totals() {
    for seed in [1, 2, 3] {
        let cfg = ScenarioConfig {
            seed,
            workers: 12,
            skill: 0.5,
            validator_diligence: 0.9,
            ..ScenarioConfig::default()
        };
        let (p, report) = simulate(common::shared_model(), &cfg).unwrap();
        assert_eq!(report.unsettled, 0);
        let state = p.state();
        let rates = &state.config.payment;
        let mut failing = 0i64;
        let mut matching = 0i64;
        for t in state.trials.values() {
            let Some(a) = t.sample_id.and_then(|s| state.adjudications.get(&s)) else {
                continue;
            };
            if a.status == failprobe_core::adjudication::AdjudicationStatus::ValidatedFailing {
                failing += 1;
                if a.category == state.sessions[&t.session_id].target_category {
                    matching += 1;
                }
            }
        }
        let expected =
            rates.base * state.trials.len() as i64 + rates.fail_bonus * failing + rates.category_bonus * matching;
        assert_eq!(p.ledger_total(), expected, "seed {seed}");
        assert!(failing > 0);
        for e in state.ledger.values() {
            assert!(e.fail_bonus >= Money::ZERO && e.category_bonus >= Money::ZERO);
            assert!(e.category_bonus == Money::ZERO || e.fail_bonus > Money::ZERO);
        }
    }
}

#[test]
fn settling_twice_is_idempotent() {
    let mut p = platform();
    let s = open(&mut p, "w", PLAIN, 0);
    let t = p
        .submit_trial(s.session_id, "one two three four five", Timestamp(1_000))
        .unwrap();
    assert!(matches!(
        p.settle_bonuses(t.trial_id),
        Err(Error::AdjudicationIncomplete(_))
    ));
    p.give_up(t.trial_id, Timestamp(2_000)).unwrap();
    let a = p.settle_bonuses(t.trial_id).unwrap();
    let events = p.events().len();
    let b = p.settle_bonuses(t.trial_id).unwrap();
    assert_eq!(a, b);
    assert_eq!(p.events().len(), events);
    assert_eq!(p.ledger_total(), Money::from_dollars(0.01));
}
