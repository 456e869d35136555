use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, ClassifierError, Prediction, SentimentLabel, SentimentModel};

const ALPHA: f64 = 1.0;

/// Persisted sufficient statistics of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Counts {
    alpha: f64,
    doc_counts: [u64; 3],
    token_totals: [u64; 3],
    vocabulary: BTreeMap<String, [u64; 3]>,
}

/// Multinomial naive Bayes over lowercased unigrams with additive smoothing.
///
/// Tokens outside the training vocabulary are ignored, so a sentence with no
/// known words is scored by the class priors alone.
#[derive(Debug, Clone)]
pub struct NaiveBayesModel {
    counts: Counts,
    log_priors: [f64; 3],
    log_likelihoods: HashMap<String, [f64; 3]>,
}

impl PartialEq for NaiveBayesModel {
    fn eq(&self, other: &Self) -> bool {
        self.counts == other.counts
    }
}

impl NaiveBayesModel {
    pub fn train<S: AsRef<str>>(corpus: &[(S, SentimentLabel)]) -> Result<Self, ClassifierError> {
        if corpus.is_empty() {
            return Err(ClassifierError::EmptyCorpus);
        }
        let mut doc_counts = [0u64; 3];
        let mut token_totals = [0u64; 3];
        let mut vocabulary: BTreeMap<String, [u64; 3]> = BTreeMap::new();
        for (text, label) in corpus {
            let c = label.index();
            doc_counts[c] += 1;
            for token in tokenize(text.as_ref()).tokens {
                vocabulary.entry(token.text).or_default()[c] += 1;
                token_totals[c] += 1;
            }
        }
        if let Some(missing) = SentimentLabel::ALL.into_iter().find(|l| doc_counts[l.index()] == 0) {
            return Err(ClassifierError::MissingClass(missing));
        }
        Ok(Self::from_counts(Counts {
            alpha: ALPHA,
            doc_counts,
            token_totals,
            vocabulary,
        }))
    }

    fn from_counts(counts: Counts) -> Self {
        let docs: u64 = counts.doc_counts.iter().sum();
        let log_priors = counts.doc_counts.map(|n| (n as f64).ln() - (docs as f64).ln());
        let vocab_size = counts.vocabulary.len() as f64;
        let denominators = counts.token_totals.map(|t| (t as f64 + counts.alpha * vocab_size).ln());
        let log_likelihoods = counts
            .vocabulary
            .iter()
            .map(|(word, per_class)| {
                let mut ll = [0.0; 3];
                for c in 0..3 {
                    ll[c] = (per_class[c] as f64 + counts.alpha).ln() - denominators[c];
                }
                (word.clone(), ll)
            })
            .collect();
        NaiveBayesModel {
            counts,
            log_priors,
            log_likelihoods,
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.vocabulary.len()
    }

    /// Unnormalized log posterior per class.
    pub fn log_scores(&self, text: &str) -> [f64; 3] {
        let mut scores = self.log_priors;
        for token in tokenize(text).tokens {
            if let Some(ll) = self.log_likelihoods.get(&token.text) {
                for c in 0..3 {
                    scores[c] += ll[c];
                }
            }
        }
        scores
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        Ok(serde_json::to_string_pretty(&self.counts)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        let counts: Counts = serde_json::from_str(json)?;
        Ok(Self::from_counts(counts))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl SentimentModel for NaiveBayesModel {
    fn predict(&self, text: &str) -> Prediction {
        let scores = self.log_scores(text);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Prediction::from_scores(scores.map(|s| (s - max).exp()))
    }
}

#[derive(Debug, Deserialize)]
struct CorpusRow {
    text: String,
    label: String,
}

/// Reads a `text,label` CSV with a header row.
pub fn read_corpus<R: Read>(reader: R) -> Result<Vec<(String, SentimentLabel)>, ClassifierError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CorpusRow>() {
        let row = row?;
        out.push((row.text, row.label.parse()?));
    }
    Ok(out)
}

pub fn read_corpus_path(path: impl AsRef<Path>) -> Result<Vec<(String, SentimentLabel)>, ClassifierError> {
    read_corpus(std::fs::File::open(path)?)
}
