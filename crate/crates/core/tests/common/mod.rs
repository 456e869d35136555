#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use failprobe_core::classifier::{read_corpus_path, NaiveBayesModel, Prediction, SentimentModel};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_model() -> Arc<NaiveBayesModel> {
    let corpus = read_corpus_path(fixture("training_corpus.csv")).expect("fixture corpus");
    Arc::new(NaiveBayesModel::train(&corpus).expect("fixture model trains"))
}

pub fn shared_model() -> Arc<dyn SentimentModel> {
    fixture_model()
}

pub fn explain_sentences() -> Vec<String> {
    std::fs::read_to_string(fixture("explain_sentences.txt"))
        .expect("fixture sentences")
        .lines()
        .map(str::to_owned)
        .collect()
}

/// Model that always returns the given scores.
pub fn constant_model(scores: [f64; 3]) -> impl SentimentModel {
    move |_: &str| Prediction::from_scores(scores)
}
