mod common;

use failprobe_core::crowdsim::{simulate, simulate_to_file, ScenarioConfig};
use failprobe_core::ids::{Timestamp, WorkerId};
use failprobe_core::store::{encode_header, Platform, SEED_CATEGORIES};
use failprobe_core::{Error, PlatformConfig};

fn scenarios() -> Vec<ScenarioConfig> {
    vec![
        ScenarioConfig::default(),
        ScenarioConfig {
            seed: 9,
            workers: 7,
            skill: 0.8,
            validator_diligence: 0.7,
            conditions: vec!["LIME+noSP".into(), "noLIME+SP".into()],
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            seed: 21,
            workers: 10,
            adversarial_validators: 1,
            validators: 7,
            trial_budget: Some(23),
            ..ScenarioConfig::default()
        },
    ]
}

#[test]
fn empty_logs_bootstrap_the_seed_categories() {
    let dir = tempfile::tempdir().unwrap();
    for (name, bytes) in [("zero.log", Vec::new()), ("header.log", encode_header())] {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        let p = Platform::open(common::shared_model(), &path).unwrap();
        let names: Vec<&str> = p.categories().map(|c| c.name.as_str()).collect();
        assert_eq!(names, SEED_CATEGORIES.map(|(n, _)| n));
        let reopened = Platform::open(common::shared_model(), &path).unwrap();
        assert_eq!(reopened.state_hash(), p.state_hash());
    }
    let fresh = Platform::from_events(common::shared_model(), Vec::new()).unwrap();
    assert_eq!(fresh.categories().count(), 5);
}

#[test]
fn replay_reproduces_the_live_state_hash() {
    for cfg in scenarios() {
        let (live, _) = simulate(common::shared_model(), &cfg).unwrap();
        let replayed = Platform::from_log_bytes(common::shared_model(), &live.log_bytes()).unwrap();
        assert_eq!(replayed.state_hash(), live.state_hash(), "seed {}", cfg.seed);
        assert_eq!(replayed.state(), live.state());
    }
}

#[test]
fn file_log_survives_reopen_and_append() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.log");
    let (live, report) = simulate_to_file(common::shared_model(), &ScenarioConfig::default(), &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), live.log_bytes());
    assert_eq!(report.state_hash, live.state_hash());
    drop(live);

    let mut reopened = Platform::open(common::shared_model(), &path).unwrap();
    assert_eq!(reopened.state_hash(), report.state_hash);
    reopened
        .create_category("Reversed sentiment", "but-clauses", &WorkerId::new("dev"), Timestamp(1))
        .unwrap();
    let hash = reopened.state_hash();
    drop(reopened);
    let again = Platform::open(common::shared_model(), &path).unwrap();
    assert_eq!(again.state_hash(), hash);
    assert_eq!(again.categories().filter(|c| c.active).count(), 6);
}

#[test]
fn truncated_or_damaged_logs_are_corrupt() {
    let (live, _) = simulate(common::shared_model(), &ScenarioConfig::default()).unwrap();
    let bytes = live.log_bytes();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.log");
    for cut in [bytes.len() - 1, bytes.len() / 2, 13] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        let err = Platform::open(common::shared_model(), &path).unwrap_err();
        assert!(matches!(err, Error::CorruptLog(_)), "cut {cut}: {err}");
        assert_eq!(err.code(), "CORRUPT_LOG");
    }
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x01;
    assert!(matches!(
        Platform::from_log_bytes(common::shared_model(), &flipped),
        Err(Error::CorruptLog(_))
    ));
}

#[test]
fn idempotent_retries_do_not_double_count() {
    let mut p = Platform::new(common::shared_model(), PlatformConfig::default()).unwrap();
    let create = |p: &mut Platform, name: &str| {
        let name = name.to_owned();
        p.idempotent(Some("key-1"), &name.clone(), move |p| {
            p.create_category(&name, "", &WorkerId::new("dev"), Timestamp(0))
        })
    };
    let a = create(&mut p, "Reversed sentiment").unwrap();
    let events = p.events().len();
    let b = create(&mut p, "Reversed sentiment").unwrap();
    assert_eq!(a, b);
    assert_eq!(p.events().len(), events);
    assert!(matches!(
        create(&mut p, "Other name"),
        Err(Error::IdempotencyConflict(_))
    ));
    assert!(matches!(
        p.create_category("reversed SENTIMENT", "", &WorkerId::new("dev"), Timestamp(0)),
        Err(Error::DuplicateCategory(_))
    ));
}
