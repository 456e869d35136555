//! A synthetic run with fixed bookkeeping totals, used to check that the
//! analytics reproduce known counts exactly.

use crate::adjudication::{AdjudicationResult, AdjudicationStatus};
use crate::analytics::{run_summary, RunSnapshot, RunSummary, SessionRecord, TrialRecord};
use crate::classifier::{Prediction, SentimentLabel};
use crate::error::{Error, Result};
use crate::ids::{CategoryId, SampleId, SessionId, Timestamp, TrialId, WorkerId};
use crate::pipeline::PromptCondition;
use crate::store::{Category, SEED_CATEGORIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceCondition {
    pub condition: PromptCondition,
    pub trials: usize,
    pub validated: usize,
    pub workers: usize,
}

pub const REFERENCE_CONDITIONS: [ReferenceCondition; 2] = [
    ReferenceCondition {
        condition: PromptCondition::new(true, true),
        trials: 262,
        validated: 75,
        workers: 66,
    },
    ReferenceCondition {
        condition: PromptCondition::new(false, false),
        trials: 293,
        validated: 108,
        workers: 46,
    },
];

/// Validated failures per seed category, in category id order.
pub const REFERENCE_CATEGORY_COUNTS: [usize; 5] = [23, 44, 46, 40, 30];

/// Builds the reference run. Trials are spread over workers as evenly as
/// possible; validated failures are spread over trials and categories
/// round-robin.
pub fn reference_snapshot() -> RunSnapshot {
    let categories: Vec<Category> = SEED_CATEGORIES
        .iter()
        .enumerate()
        .map(|(i, (name, description))| Category {
            category_id: CategoryId(i as u64 + 1),
            name: (*name).to_owned(),
            description: (*description).to_owned(),
            created_by: WorkerId::new("system"),
            active: true,
        })
        .collect();
    let mut category_slots: Vec<CategoryId> = REFERENCE_CATEGORY_COUNTS
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(CategoryId(i as u64 + 1), n))
        .collect();
    category_slots.reverse();

    let mut snapshot = RunSnapshot {
        categories,
        ..RunSnapshot::default()
    };
    let mut session_id = 0;
    let mut trial_id = 0;
    let mut sample_id = 0;
    for (ci, rc) in REFERENCE_CONDITIONS.iter().enumerate() {
        let mut remaining_valid = rc.validated;
        for w in 0..rc.workers {
            let worker_id = WorkerId(format!("c{}-w{:03}", ci + 1, w + 1));
            let trials = rc.trials / rc.workers + usize::from(w < rc.trials % rc.workers);
            session_id += 1;
            let started_at = Timestamp(3_600_000 * session_id);
            snapshot.sessions.push(SessionRecord {
                session_id: SessionId(session_id),
                worker_id: worker_id.clone(),
                condition: rc.condition,
                target_category: CategoryId(1 + (w as u64 % 2)),
                started_at,
            });
            let workers_left = rc.workers - w;
            let valid_here = remaining_valid.div_ceil(workers_left).min(trials);
            remaining_valid -= valid_here;
            for k in 0..trials {
                trial_id += 1;
                let validated = k < valid_here;
                let adjudication = validated.then(|| {
                    sample_id += 1;
                    AdjudicationResult {
                        sample_id: SampleId(sample_id),
                        status: AdjudicationStatus::ValidatedFailing,
                        ground_truth: Some(SentimentLabel::Negative),
                        conf_human: [0.6, 0.8, 1.0][sample_id as usize % 3],
                        category: category_slots.pop().expect("enough category slots"),
                        judgment_count: 5,
                    }
                });
                let confidence = [0.5, 0.7, 0.9][trial_id as usize % 3];
                let rest = (1.0 - confidence) / 2.0;
                snapshot.trials.push(TrialRecord {
                    trial_id: TrialId(trial_id),
                    session_id: SessionId(session_id),
                    worker_id: worker_id.clone(),
                    condition: rc.condition,
                    submitted_at: Timestamp(started_at.0 + 50_000 * (k as u64 + 1)),
                    text: format!("reference sentence number {trial_id} for the run"),
                    prediction: Prediction::from_scores([rest, rest, confidence]),
                    claimed: validated,
                    sample_id: adjudication.as_ref().map(|a| a.sample_id),
                    adjudication,
                    explanation: None,
                });
            }
        }
        assert_eq!(remaining_valid, 0);
    }
    snapshot
}

/// Summarizes the reference run and checks it against the fixed totals.
pub fn replay_reference_run() -> Result<RunSummary> {
    let summary = run_summary(&reference_snapshot());
    let mismatch = |what: &str, got: usize, want: usize| {
        Error::Data(format!("reference replay: {what} is {got}, expected {want}"))
    };
    let want_total: usize = REFERENCE_CONDITIONS.iter().map(|c| c.trials).sum();
    let want_valid: usize = REFERENCE_CONDITIONS.iter().map(|c| c.validated).sum();
    let want_workers: usize = REFERENCE_CONDITIONS.iter().map(|c| c.workers).sum();
    for (what, got, want) in [
        ("total trials", summary.n_total_trials, want_total),
        ("validated trials", summary.n_validated, want_valid),
        ("workers", summary.worker_count, want_workers),
    ] {
        if got != want {
            return Err(mismatch(what, got, want));
        }
    }
    for rc in REFERENCE_CONDITIONS {
        let stats = summary
            .condition(rc.condition)
            .ok_or_else(|| mismatch(&format!("{} trials", rc.condition), 0, rc.trials))?;
        for (what, got, want) in [
            ("trials", stats.n_total, rc.trials),
            ("validated", stats.n_valid, rc.validated),
            ("workers", stats.workers, rc.workers),
        ] {
            if got != want {
                return Err(mismatch(&format!("{} {what}", rc.condition), got, want));
            }
        }
    }
    Ok(summary)
}
