//! Event-sourced persistence.
//!
//! Every mutation is recorded as an [`Event`] in an append-only log before
//! it becomes visible; [`State`] is a pure fold over that log, so replaying
//! a log file reproduces the live state exactly.

mod events;
mod log;
mod platform;
mod state;

pub use events::{Event, StoredEvent};
pub use log::{decode_log, encode_header, encode_record, LogError, LogWriter, LOG_MAGIC, LOG_VERSION};
pub use platform::Platform;
pub use state::{Counters, IdempotencyRecord, SeedError, State};

use serde::{Deserialize, Serialize};

use crate::ids::{CategoryId, WorkerId};

/// Names of the categories every store starts with, in id order.
pub const SEED_CATEGORIES: [(&str, &str); 5] = [
    (
        "Subtle Sentiment Cues",
        "Positive or negative sentences whose sentiment is only hinted at",
    ),
    (
        "Mixed-sentiment",
        "Sentences that combine positive and negative statements",
    ),
    ("Questions", "Sentences phrased as questions"),
    ("Others", "Errors that fit no other category"),
    ("No majority", "Annotators could not agree on a category"),
];

pub const NO_MAJORITY: &str = "No majority";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub category_id: CategoryId,
    pub name: String,
    pub description: String,
    pub created_by: WorkerId,
    pub active: bool,
}
