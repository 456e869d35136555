mod common;

use failprobe_core::analytics::{summarize, TableFilter};
use failprobe_core::config::AnalyticsConfig;
use failprobe_core::crowdsim::{reference_snapshot, simulate, ScenarioConfig};
use failprobe_core::explainer::BucketThresholds;
use failprobe_core::pipeline::PromptCondition;
use failprobe_core::{Platform, PlatformConfig};

#[test]
fn reference_category_columns_and_robustness() {
    let summary = summarize(
        &reference_snapshot(),
        &AnalyticsConfig::default(),
        BucketThresholds::default(),
    )
    .unwrap();
    let subtle = summary.category("Subtle Sentiment Cues").unwrap();
    let mixed = summary.category("Mixed-sentiment").unwrap();
    assert_eq!(subtle.counts.total(), 23);
    assert_eq!(mixed.counts.total(), 44);
    assert!((subtle.robustness - 23.0 / 183.0).abs() < 1e-9);
    assert!((mixed.robustness - 44.0 / 183.0).abs() < 1e-9);
    let column_sum: usize = summary.categories.iter().map(|c| c.counts.total()).sum();
    assert_eq!(column_sum, summary.run.n_validated);
    assert!((summary.run.validated_fraction() - 183.0 / 555.0).abs() < 1e-12);
}

#[test]
fn aggregate_rate_is_not_the_mean_worker_rate() {
    let summary = summarize(
        &reference_snapshot(),
        &AnalyticsConfig::default(),
        BucketThresholds::default(),
    )
    .unwrap();
    let lime = summary.run.condition(PromptCondition::new(true, true)).unwrap();
    let aggregate = lime.n_valid as f64 / lime.n_total as f64;
    assert!((aggregate - 75.0 / 262.0).abs() < 1e-12);
    assert!((lime.mean_success_rate - aggregate).abs() > 1e-6);
    assert!(summary.workers.iter().all(|w| (0.0..=1.0).contains(&w.success_rate)));
}

#[test]
fn empty_platform_summary_is_zero() {
    let p = Platform::new(common::shared_model(), PlatformConfig::default()).unwrap();
    let s = p.analysis_summary(None).unwrap();
    assert_eq!((s.run.n_total_trials, s.run.n_validated, s.run.worker_count), (0, 0, 0));
    assert!(s.table.is_empty() && s.cloud.is_empty() && s.workers.is_empty());
    assert_eq!(s.categories.len(), 5);
    assert!(s
        .categories
        .iter()
        .all(|c| c.robustness == 0.0 && c.counts.total() == 0));
}

#[test]
fn simulated_run_views_are_consistent() {
    let cfg = ScenarioConfig {
        skill: 0.6,
        validator_diligence: 0.9,
        ..ScenarioConfig::default()
    };
    let (p, _) = simulate(common::shared_model(), &cfg).unwrap();
    let s = p.analysis_summary(None).unwrap();
    let n_categ: usize = s.categories.iter().map(|c| c.counts.total()).sum();
    assert_eq!(n_categ, s.run.n_validated);
    assert_eq!(s.table.len(), s.run.n_validated);
    for row in &s.table {
        assert_ne!(row.prediction, row.ground_truth);
        assert!(!row.tokens.is_empty());
    }
    let by_category: usize = s
        .categories
        .iter()
        .map(|c| p.analysis_summary(Some(c.category_id)).unwrap().table.len())
        .sum();
    assert_eq!(by_category, s.table.len());

    let word = s.cloud.first().map(|c| c.word.clone());
    let category = s.table.first().map(|r| r.category_id);
    let word_only = TableFilter {
        word: word.clone(),
        ..TableFilter::default()
    };
    let cat_only = TableFilter {
        category,
        ..TableFilter::default()
    };
    let both = TableFilter {
        word,
        category,
        ..TableFilter::default()
    };
    let a = cat_only.apply(&word_only.apply(&s.table));
    let b = word_only.apply(&cat_only.apply(&s.table));
    assert_eq!(a, b);
    assert_eq!(a, both.apply(&s.table));
    assert_eq!(p.analysis_table(&TableFilter::default()).unwrap(), s.table);
}
