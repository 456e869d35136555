//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances and time budgets are pinned below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use failprobe_core::adjudication::{adjudicate_judgments, AdjudicationStatus, Judgment};
use failprobe_core::analytics::{
    severity, summarize, worker_stats, SeverityThresholds, SeverityWeights, WorkerEvent, TRIAL_TIME_CAP_SECS,
};
use failprobe_core::classifier::{read_corpus_path, tokenize};
use failprobe_core::config::AnalyticsConfig;
use failprobe_core::crowdsim::{
    reference_snapshot, replay_reference_run, simulate, simulate_to_file, ScenarioConfig, TrialTime,
};
use failprobe_core::explainer::{explain, explain_exhaustive, BucketThresholds, ExplainConfig};
use failprobe_core::ids::{CategoryId, JudgmentId, SampleId, Timestamp, WorkerId};
use failprobe_core::pipeline::PromptCondition;
use failprobe_core::{NaiveBayesModel, Platform, Prediction, SentimentLabel, SentimentModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEVERITY_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-6;
const SAMPLED_REL_TOL: f64 = 0.05;
const ROBUSTNESS_TOL: f64 = 1e-9;
const MONOTONE_PAIRS: usize = 1000;

const BIN: &str = env!("CARGO_BIN_EXE_failprobe");
const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/training_corpus.csv");

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn model() -> Arc<NaiveBayesModel> {
    Arc::new(NaiveBayesModel::train(&read_corpus_path(CORPUS).unwrap()).unwrap())
}

fn severity_formula() -> Check {
    let w = SeverityWeights { human: 0.5, ai: 0.5 };
    let th = SeverityThresholds::default();
    let s = severity(0.6, 0.9, w, th).map_err(|e| e.to_string())?;
    ensure!((s.severity - 0.75).abs() < SEVERITY_TOL, "S = {}", s.severity);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..MONOTONE_PAIRS {
        let (h, a): (f64, f64) = (rng.random(), rng.random());
        let h2 = h + (1.0 - h) * rng.random::<f64>();
        let a2 = a + (1.0 - a) * rng.random::<f64>();
        let lo = severity(h, a, w, th).unwrap().severity;
        let hi = severity(h2, a2, w, th).unwrap().severity;
        ensure!(hi >= lo, "not monotone: S({h},{a})={lo} > S({h2},{a2})={hi}");
    }
    Ok(format!("S=0.75, {MONOTONE_PAIRS} monotone pairs"))
}

fn majority_vote_oracle() -> Check {
    let labels = SentimentLabel::ALL;
    let mut checked = 0;
    for code in 0..243usize {
        let votes: Vec<SentimentLabel> = (0..5).map(|i| labels[code / 3usize.pow(i) % 3]).collect();
        let judgments: Vec<Judgment> = votes
            .iter()
            .enumerate()
            .map(|(i, v)| Judgment {
                judgment_id: JudgmentId(i as u64),
                sample_id: SampleId(1),
                worker_id: WorkerId::new(format!("w{i}")),
                is_english_and_sensible: true,
                sentiment: Some(*v),
                category: Some(CategoryId(1)),
                is_gold: false,
                submitted_at: Timestamp(0),
            })
            .collect();
        let counts = labels.map(|l| votes.iter().filter(|v| **v == l).count());
        let max = *counts.iter().max().unwrap();
        let winners: Vec<usize> = (0..3).filter(|&i| counts[i] == max).collect();
        for prediction in labels {
            let got = adjudicate_judgments(SampleId(1), &judgments, prediction, 5, CategoryId(5)).unwrap();
            let (status, truth) = if winners.len() == 1 {
                let l = labels[winners[0]];
                let s = if l != prediction {
                    AdjudicationStatus::ValidatedFailing
                } else {
                    AdjudicationStatus::ValidatedNotFailing
                };
                (s, Some(l))
            } else {
                (AdjudicationStatus::NoMajoritySentiment, None)
            };
            ensure!(
                got.status == status && got.ground_truth == truth,
                "votes {votes:?}: {got:?}"
            );
            ensure!(
                (got.conf_human - max as f64 / 5.0).abs() < 1e-12,
                "confidence for {votes:?}"
            );
            checked += 1;
        }
    }
    Ok(format!("243 vote combinations x 3 predictions = {checked} cases"))
}

fn closed_form(model: &dyn SentimentModel, text: &str) -> Vec<DVector<f64>> {
    let words: Vec<String> = tokenize(text).tokens.into_iter().map(|t| t.text).collect();
    let n = words.len();
    let width = 0.75 * (n as f64).sqrt();
    let rows = 1usize << n;
    let mut x = DMatrix::<f64>::zeros(rows, n + 1);
    let mut w = DVector::<f64>::zeros(rows);
    let mut y = vec![DVector::<f64>::zeros(rows); 3];
    for r in 0..rows {
        x[(r, 0)] = 1.0;
        let kept: Vec<&str> = (0..n).filter(|j| r >> j & 1 == 1).map(|j| words[j].as_str()).collect();
        for j in 0..n {
            x[(r, j + 1)] = (r >> j & 1) as f64;
        }
        let d = if kept.is_empty() {
            1.0
        } else {
            1.0 - (kept.len() as f64 / n as f64).sqrt()
        };
        w[r] = (-(d * d) / (width * width)).exp();
        let p = model.predict(&kept.join(" ")).probabilities.to_array();
        for c in 0..3 {
            y[c][r] = p[c];
        }
    }
    let wx = DMatrix::from_fn(rows, n + 1, |r, c| w[r] * x[(r, c)]);
    let mut gram = x.transpose() * &wx;
    for j in 1..=n {
        gram[(j, j)] += 1.0;
    }
    let chol = gram.cholesky().expect("positive definite");
    (0..3).map(|c| chol.solve(&(wx.transpose() * &y[c]))).collect()
}

const LINEAR: [(&str, f64); 8] = [
    ("alpha", 0.12),
    ("bravo", -0.08),
    ("charlie", 0.05),
    ("delta", 0.20),
    ("echo", -0.15),
    ("foxtrot", 0.10),
    ("golf", 0.07),
    ("hotel", -0.06),
];

fn linear_model(text: &str) -> Prediction {
    let words: Vec<String> = tokenize(text).tokens.into_iter().map(|t| t.text).collect();
    let p = 0.4
        + LINEAR
            .iter()
            .filter(|(w, _)| words.iter().any(|x| x == w))
            .map(|(_, c)| c)
            .sum::<f64>();
    let rest = (1.0 - p) / 2.0;
    Prediction::from_scores([rest * 0.5, rest * 1.5, p])
}

fn explainer_oracle() -> Check {
    let model = model();
    let texts = [
        "The food was excellent and the staff was very good",
        "I would not call the hotel pleasant at all",
        "Is the camera really as impressive as they say",
        "What a boring show",
    ];
    let mut worst: f64 = 0.0;
    for text in texts {
        let e = explain_exhaustive(model.as_ref(), text, &ExplainConfig::default()).map_err(|e| e.to_string())?;
        let fits = closed_form(model.as_ref(), text);
        for (c, beta) in fits.iter().enumerate() {
            let label = SentimentLabel::ALL[c];
            worst = worst.max((e.intercepts.get(label) - beta[0]).abs());
            for (j, t) in e.tokens.iter().enumerate() {
                worst = worst.max((t.class_weights.get(label) - beta[j + 1]).abs());
            }
        }
    }
    ensure!(worst < ORACLE_TOL, "exhaustive max abs error {worst:e}");

    let text = LINEAR.map(|(w, _)| w).join(" ");
    let config = ExplainConfig {
        sample_count: 2000,
        seed: 11,
        ..ExplainConfig::default()
    };
    let e = explain(&linear_model, &text, &config).map_err(|e| e.to_string())?;
    let mut worst_rel: f64 = 0.0;
    for (t, (_, coef)) in e.tokens.iter().zip(LINEAR) {
        worst_rel = worst_rel.max((t.class_weights.positive - coef).abs() / coef.abs());
    }
    ensure!(
        worst_rel < SAMPLED_REL_TOL,
        "sampled max rel error {:.2}%",
        worst_rel * 100.0
    );
    Ok(format!(
        "exhaustive err {worst:.1e}, N=2000 rel err {:.2}%",
        worst_rel * 100.0
    ))
}

fn excellent_sign() -> Check {
    let model = model();
    let text = "Crowdsourcing is an excellent approach to utilize human intelligence";
    let e = explain(model.as_ref(), text, &ExplainConfig::default()).map_err(|e| e.to_string())?;
    ensure!(e.predicted == SentimentLabel::Positive, "predicted {}", e.predicted);
    let best = e
        .tokens
        .iter()
        .max_by(|a, b| a.class_weights.positive.total_cmp(&b.class_weights.positive))
        .unwrap();
    ensure!(best.token == "excellent", "top positive token {:?}", best.token);
    ensure!(best.class == SentimentLabel::Positive && best.weight > 0.0, "{best:?}");
    Ok(format!("excellent -> positive {:+.4}", best.weight))
}

fn reference_replay() -> Check {
    let s = replay_reference_run().map_err(|e| e.to_string())?;
    ensure!(
        (s.n_total_trials, s.n_validated, s.worker_count) == (555, 183, 112),
        "totals {}/{}/{}",
        s.n_total_trials,
        s.n_validated,
        s.worker_count
    );
    for (key, want) in [("LIME+SP", (262, 75, 66)), ("noLIME+noSP", (293, 108, 46))] {
        let c = s
            .condition(PromptCondition::parse_key(key).unwrap())
            .ok_or(format!("missing {key}"))?;
        ensure!(
            (c.n_total, c.n_valid, c.workers) == want,
            "{key}: {}/{}/{}",
            c.n_total,
            c.n_valid,
            c.workers
        );
    }
    Ok("555/183/112, 262/75/66, 293/108/46".into())
}

fn category_counts() -> Check {
    let s = summarize(
        &reference_snapshot(),
        &AnalyticsConfig::default(),
        BucketThresholds::default(),
    )
    .map_err(|e| e.to_string())?;
    for (name, n) in [("Subtle Sentiment Cues", 23), ("Mixed-sentiment", 44)] {
        let c = s.category(name).ok_or(format!("missing {name}"))?;
        ensure!(c.counts.total() == n, "{name}: {} samples", c.counts.total());
        ensure!(
            (c.robustness - n as f64 / 183.0).abs() < ROBUSTNESS_TOL,
            "{name}: robustness {}",
            c.robustness
        );
    }
    Ok("23 and 44; robustness 23/183 and 44/183".into())
}

fn trial_time_cap() -> Check {
    let events = [
        WorkerEvent::SessionStarted { at: Timestamp(0) },
        WorkerEvent::Trial {
            at: Timestamp(40_000),
            validated_failing: false,
        },
        WorkerEvent::Trial {
            at: Timestamp(440_000),
            validated_failing: false,
        },
    ];
    let stats = worker_stats(&WorkerId::new("w"), &events).ok_or("no stats")?;
    ensure!(stats.avg_time_per_trial == 170.0, "T = {}", stats.avg_time_per_trial);

    let model = model();
    let slow = TrialTime {
        mean_secs: 400.0,
        sigma: 1.0,
    };
    let mut scenarios = Vec::new();
    for (seed, trial_time) in [(1, TrialTime::default()), (2, slow), (3, slow)] {
        scenarios.push(ScenarioConfig {
            seed,
            trial_time,
            sessions_per_worker: 2,
            ..ScenarioConfig::default()
        });
    }
    let mut count = 0;
    for cfg in &scenarios {
        let (p, _) = simulate(model.clone(), cfg).map_err(|e| e.to_string())?;
        let summary = p.analysis_summary(None).map_err(|e| e.to_string())?;
        for t in summary.workers.iter().flat_map(|w| &w.trial_times) {
            ensure!(*t <= TRIAL_TIME_CAP_SECS, "trial time {t} in seed {}", cfg.seed);
            count += 1;
        }
    }
    Ok(format!("T=170; {count} simulated trial times <= 300 s"))
}

fn simulate_cli(dir: &Path, model: &Path, tag: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let log = dir.join(format!("{tag}.log"));
    let csv = dir.join(format!("{tag}.csv"));
    let out = Command::new(BIN)
        .args(["simulate", "--model"])
        .arg(model)
        .args(["--workers", "20", "--seed", "42", "--log"])
        .arg(&log)
        .arg("--export")
        .arg(&csv)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "simulate failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok((std::fs::read(log).unwrap(), std::fs::read(csv).unwrap()))
}

fn end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("model.json");
    let out = Command::new(BIN)
        .args(["train", "--corpus", CORPUS, "--out"])
        .arg(&model)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "train failed");
    let (log_a, csv_a) = simulate_cli(dir.path(), &model, "a")?;
    let (log_b, csv_b) = simulate_cli(dir.path(), &model, "b")?;
    ensure!(log_a == log_b, "event logs differ");
    ensure!(csv_a == csv_b, "exports differ");
    let text = String::from_utf8(csv_a).map_err(|e| e.to_string())?;
    ensure!(
        text.starts_with("Text,Human_Label,AI_Label,Category\n"),
        "header {:?}",
        text.lines().next()
    );
    Ok(format!(
        "{} log bytes, {} export rows, identical",
        log_a.len(),
        text.lines().count() - 1
    ))
}

fn crash_replay() -> Check {
    let model = model();
    let scenarios = [
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
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, cfg) in scenarios.iter().enumerate() {
        let path = dir.path().join(format!("{i}.log"));
        let (live, _) = simulate_to_file(model.clone(), cfg, &path).map_err(|e| e.to_string())?;
        let reopened = Platform::open(model.clone(), &path).map_err(|e| e.to_string())?;
        ensure!(
            reopened.state_hash() == live.state_hash(),
            "scenario {i}: file replay hash differs"
        );
        let replayed = Platform::from_log_bytes(model.clone(), &live.log_bytes()).map_err(|e| e.to_string())?;
        ensure!(
            replayed.state_hash() == live.state_hash(),
            "scenario {i}: byte replay hash differs"
        );
    }
    Ok(format!("{} scenarios, live hash = replayed hash", scenarios.len()))
}

fn quality_control() -> Check {
    let mut cfg = ScenarioConfig {
        seed: 17,
        workers: 20,
        skill: 0.6,
        validators: 8,
        adversarial_validators: 1,
        adversarial_diligence: 0.1,
        ..ScenarioConfig::default()
    };
    cfg.platform.validation.gold_rate = 0.3;
    let (p, report) = simulate(model(), &cfg).map_err(|e| e.to_string())?;
    let adversary = WorkerId::new("validator-001");
    ensure!(
        report.rejected_validators == vec![adversary.clone()],
        "rejected {:?}",
        report.rejected_validators
    );
    let state = p.state();
    let accuracy = state.workers[&adversary].accuracy().unwrap_or(1.0);
    ensure!(accuracy < 0.7, "gold accuracy {accuracy}");
    let affected: Vec<SampleId> = state
        .judgments
        .values()
        .filter(|j| j.worker_id == adversary && !j.is_gold)
        .map(|j| j.sample_id)
        .collect();
    ensure!(!affected.is_empty(), "adversary judged nothing");
    for s in &affected {
        let a = state.adjudications.get(s).ok_or(format!("{s} not adjudicated"))?;
        ensure!(a.judgment_count == 5, "{s}: {} judgments", a.judgment_count);
        ensure!(
            state.accepted_judgments(*s).all(|j| j.worker_id != adversary),
            "{s} kept a rejected judgment"
        );
    }
    Ok(format!(
        "gold accuracy {accuracy:.2}; {} affected samples re-adjudicated at quorum 5",
        affected.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "severity formula and monotonicity",
            Duration::from_secs(1),
            severity_formula,
        ),
        (
            "majority vote vs brute force",
            Duration::from_secs(1),
            majority_vote_oracle,
        ),
        (
            "explainer closed-form and sampled oracle",
            Duration::from_secs(30),
            explainer_oracle,
        ),
        (
            "explainer sign check on 'excellent'",
            Duration::from_secs(5),
            excellent_sign,
        ),
        ("reference bookkeeping replay", Duration::from_secs(1), reference_replay),
        ("category counts replay", Duration::from_secs(1), category_counts),
        ("trial-time cap", Duration::from_secs(60), trial_time_cap),
        (
            "end-to-end determinism",
            Duration::from_secs(60),
            end_to_end_determinism,
        ),
        ("crash replay", Duration::from_secs(60), crash_replay),
        ("quality control", Duration::from_secs(60), quality_control),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, check) in criteria.iter().copied() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; over budget {budget:?}"))
            }
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name} [{:.3}s] {detail}", elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
