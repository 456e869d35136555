//! The black-box prediction contract and a trainable stand-in model.
//!
//! Downstream modules only ever see [`SentimentModel`]: a sentence goes in,
//! a label with class probabilities comes out.

mod naive_bayes;
mod tokenize;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use naive_bayes::{read_corpus, read_corpus_path, NaiveBayesModel};
pub use tokenize::{tokenize, Token, TokenizedText};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training corpus has no documents labelled {0}")]
    MissingClass(SentimentLabel),
    #[error("unknown sentiment label {0:?}")]
    UnknownLabel(String),
    #[error("corpus csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    /// All labels in tie-breaking order.
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            "positive" => Ok(SentimentLabel::Positive),
            _ => Err(ClassifierError::UnknownLabel(s.to_owned())),
        }
    }
}

/// One value per sentiment class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub negative: T,
    pub neutral: T,
    pub positive: T,
}

impl<T: Copy> PerClass<T> {
    pub fn from_array([negative, neutral, positive]: [T; 3]) -> Self {
        PerClass {
            negative,
            neutral,
            positive,
        }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.negative, self.neutral, self.positive]
    }

    pub fn get(&self, label: SentimentLabel) -> T {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Positive => self.positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SentimentLabel,
    pub probabilities: PerClass<f64>,
    pub confidence: f64,
}

impl Prediction {
    /// Normalizes non-negative scores into a prediction. The label is the
    /// argmax, with ties resolved toward the earlier label in
    /// [`SentimentLabel::ALL`].
    pub fn from_scores(scores: [f64; 3]) -> Self {
        let total: f64 = scores.iter().sum();
        let probs = if total > 0.0 && total.is_finite() {
            scores.map(|s| s / total)
        } else {
            [1.0 / 3.0; 3]
        };
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Prediction {
            label: SentimentLabel::ALL[best],
            probabilities: PerClass::from_array(probs),
            confidence: probs[best],
        }
    }

    pub fn probability(&self, label: SentimentLabel) -> f64 {
        self.probabilities.get(label)
    }
}

/// Sentence in, label and class probabilities out. Implementations must be
/// pure functions of their input text.
pub trait SentimentModel: Send + Sync {
    fn predict(&self, text: &str) -> Prediction;
}

impl<M: SentimentModel + ?Sized> SentimentModel for Arc<M> {
    fn predict(&self, text: &str) -> Prediction {
        (**self).predict(text)
    }
}

impl<F> SentimentModel for F
where
    F: Fn(&str) -> Prediction + Send + Sync,
{
    fn predict(&self, text: &str) -> Prediction {
        self(text)
    }
}
