//! Proactive testing of black-box sentiment classifiers.
//!
//! Crowd workers (real or simulated) craft sentences intended to fool a
//! classifier, optionally guided by per-word local surrogate explanations
//! and a pre-filled starting point. Claimed failures are validated and
//! categorized through aggregated judgments with gold-question quality
//! control, and the validated errors feed severity and robustness analytics.
//!
//! All state changes flow through an append-only event log
//! ([`store::Platform`]), so any run can be replayed byte-for-byte.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjudication;
pub mod analytics;
pub mod classifier;
pub mod config;
pub mod crowdsim;
pub mod error;
pub mod explainer;
pub mod ids;
pub mod pipeline;
pub mod rng;
pub mod store;

pub use classifier::{NaiveBayesModel, PerClass, Prediction, SentimentLabel, SentimentModel};
pub use config::PlatformConfig;
pub use error::{Error, Result};
pub use explainer::{explain, ExplainConfig, Explanation};
pub use store::Platform;
