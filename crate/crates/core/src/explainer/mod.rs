//! Local surrogate explanations for a single prediction.
//!
//! The text's words are switched off at random, the model is queried on each
//! perturbed sentence, and a proximity-weighted ridge regression per class
//! maps word presence to class probability. Each word is then attributed to
//! the class whose surrogate gives it the largest absolute weight.

mod ridge;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{tokenize, PerClass, Prediction, SentimentLabel, SentimentModel, TokenizedText};

pub use ridge::{RidgeFit, WeightedDesign};

/// Upper bound on tokens for the exhaustive perturbation set.
pub const MAX_EXHAUSTIVE_TOKENS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("cannot explain text without words")]
    EmptyText,
    #[error("exhaustive perturbation supports at most {MAX_EXHAUSTIVE_TOKENS} tokens, got {0}")]
    TooManyTokens(usize),
    #[error("bucket thresholds must satisfy 0 < weak < strong (got weak={weak}, strong={strong})")]
    BadThresholds { weak: f64, strong: f64 },
    #[error("invalid explainer configuration: {0}")]
    BadConfig(&'static str),
    #[error("surrogate solver: {0}")]
    Solver(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub sample_count: usize,
    /// Defaults to `0.75 * sqrt(token count)` when unset.
    pub kernel_width: Option<f64>,
    pub ridge_penalty: f64,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            sample_count: 500,
            kernel_width: None,
            ridge_penalty: 1.0,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn kernel_width_for(&self, token_count: usize) -> f64 {
        self.kernel_width.unwrap_or_else(|| 0.75 * (token_count as f64).sqrt())
    }

    fn validate(&self) -> Result<(), ExplainError> {
        if self.sample_count == 0 {
            return Err(ExplainError::BadConfig("sample_count must be positive"));
        }
        if !(self.ridge_penalty > 0.0) {
            return Err(ExplainError::BadConfig("ridge_penalty must be positive"));
        }
        if matches!(self.kernel_width, Some(w) if !(w > 0.0)) {
            return Err(ExplainError::BadConfig("kernel_width must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub token: String,
    pub start: usize,
    pub end: usize,
    /// Class whose surrogate weights this token most heavily.
    pub class: SentimentLabel,
    pub weight: f64,
    pub class_weights: PerClass<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub tokens: Vec<TokenAttribution>,
    pub predicted: SentimentLabel,
    pub intercepts: PerClass<f64>,
    /// Weighted R² of the predicted-class surrogate.
    pub fidelity: f64,
    pub sample_count: usize,
    pub kernel_width: f64,
    pub seed: u64,
}

impl Explanation {
    /// Index of the token with the largest absolute attribution; the earliest
    /// position wins ties.
    pub fn top_token(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, t) in self.tokens.iter().enumerate() {
            if best.is_none_or(|b| t.weight.abs() > self.tokens[b].weight.abs()) {
                best = Some(i);
            }
        }
        best
    }

    /// Surrogate estimate of `class` probability for a presence vector.
    pub fn surrogate(&self, class: SentimentLabel, keep: &[bool]) -> f64 {
        self.intercepts.get(class)
            + self
                .tokens
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(t, _)| t.class_weights.get(class))
                .sum::<f64>()
    }

    pub fn view(&self, thresholds: BucketThresholds) -> Result<ExplanationView, ExplainError> {
        let buckets = bucketize(self, thresholds)?;
        Ok(ExplanationView {
            text: self.text.clone(),
            tokens: self
                .tokens
                .iter()
                .zip(buckets)
                .map(|(t, bucket)| HighlightedToken {
                    token: t.token.clone(),
                    start: t.start,
                    end: t.end,
                    class: t.class,
                    weight: t.weight,
                    bucket,
                    color: bucket.hex().to_owned(),
                })
                .collect(),
            predicted: self.predicted,
            fidelity: self.fidelity,
            sample_count: self.sample_count,
            seed: self.seed,
        })
    }
}

/// Explains `text` with randomly masked perturbations drawn from `config.seed`.
pub fn explain(model: &dyn SentimentModel, text: &str, config: &ExplainConfig) -> Result<Explanation, ExplainError> {
    config.validate()?;
    let tokenized = tokenize(text);
    let n = tokenized.word_count();
    if n == 0 {
        return Err(ExplainError::EmptyText);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masks = Vec::with_capacity(config.sample_count);
    masks.push(vec![true; n]);
    for _ in 1..config.sample_count {
        masks.push((0..n).map(|_| rng.random_bool(0.5)).collect());
    }
    fit_surrogates(model, &tokenized, masks, config)
}

/// Explains `text` over every one of the `2^n` presence vectors.
pub fn explain_exhaustive(
    model: &dyn SentimentModel,
    text: &str,
    config: &ExplainConfig,
) -> Result<Explanation, ExplainError> {
    config.validate()?;
    let tokenized = tokenize(text);
    let n = tokenized.word_count();
    if n == 0 {
        return Err(ExplainError::EmptyText);
    }
    if n > MAX_EXHAUSTIVE_TOKENS {
        return Err(ExplainError::TooManyTokens(n));
    }
    let masks = exhaustive_masks(n);
    fit_surrogates(model, &tokenized, masks, config)
}

/// All presence vectors over `n` positions; bit `j` of the row index is
/// position `j`.
pub fn exhaustive_masks(n: usize) -> Vec<Vec<bool>> {
    (0..1usize << n)
        .map(|bits| (0..n).map(|j| bits >> j & 1 == 1).collect())
        .collect()
}

/// Cosine distance between a presence vector and the all-ones vector.
pub fn cosine_distance(keep: &[bool]) -> f64 {
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        1.0
    } else {
        1.0 - (kept as f64 / keep.len() as f64).sqrt()
    }
}

pub fn kernel_weight(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (width * width)).exp()
}

fn fit_surrogates(
    model: &dyn SentimentModel,
    tokenized: &TokenizedText,
    masks: Vec<Vec<bool>>,
    config: &ExplainConfig,
) -> Result<Explanation, ExplainError> {
    let n = tokenized.word_count();
    let width = config.kernel_width_for(n);

    let mut cache: HashMap<&[bool], Prediction> = HashMap::new();
    let mut targets: [Vec<f64>; 3] = Default::default();
    for mask in &masks {
        let prediction = cache
            .entry(mask.as_slice())
            .or_insert_with(|| model.predict(&tokenized.render_masked(mask)));
        for (c, column) in targets.iter_mut().enumerate() {
            column.push(prediction.probabilities.to_array()[c]);
        }
    }
    let original = model.predict(&tokenized.original);

    let rows: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| m.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect())
        .collect();
    let weights: Vec<f64> = masks.iter().map(|m| kernel_weight(cosine_distance(m), width)).collect();
    let design = WeightedDesign::new(&rows, &weights, config.ridge_penalty)?;
    let fits: Vec<RidgeFit> = targets.iter().map(|y| design.fit(y)).collect();

    let tokens = tokenized
        .tokens
        .iter()
        .enumerate()
        .map(|(j, token)| {
            let per_class = [0, 1, 2].map(|c| fits[c].coefficients[j]);
            let mut best = 0;
            for c in 1..3 {
                if per_class[c].abs() > per_class[best].abs() {
                    best = c;
                }
            }
            TokenAttribution {
                token: token.text.clone(),
                start: token.start,
                end: token.end,
                class: SentimentLabel::ALL[best],
                weight: per_class[best],
                class_weights: PerClass::from_array(per_class),
            }
        })
        .collect();

    Ok(Explanation {
        text: tokenized.original.clone(),
        tokens,
        predicted: original.label,
        intercepts: PerClass::from_array([0, 1, 2].map(|c| fits[c].intercept)),
        fidelity: fits[original.label.index()].r_squared,
        sample_count: masks.len(),
        kernel_width: width,
        seed: config.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorBucket {
    StrongNegative,
    WeakNegative,
    Neutral,
    WeakPositive,
    StrongPositive,
}

impl ColorBucket {
    /// Diverging red-yellow-green palette shared with the web client.
    pub fn hex(self) -> &'static str {
        match self {
            ColorBucket::StrongNegative => "#d73027",
            ColorBucket::WeakNegative => "#fc8d59",
            ColorBucket::Neutral => "#ffffbf",
            ColorBucket::WeakPositive => "#91cf60",
            ColorBucket::StrongPositive => "#1a9850",
        }
    }

    pub fn rgb(self) -> (u8, u8, u8) {
        let hex = self.hex();
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap_or(0);
        (byte(1), byte(3), byte(5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds {
    pub weak: f64,
    pub strong: f64,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        BucketThresholds {
            weak: 0.02,
            strong: 0.1,
        }
    }
}

impl BucketThresholds {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.weak > 0.0 && self.weak < self.strong {
            Ok(())
        } else {
            Err(ExplainError::BadThresholds {
                weak: self.weak,
                strong: self.strong,
            })
        }
    }
}

/// Color bucket for one attribution. The polarity is the weight's sign,
/// flipped when the attributed class is negative; neutral-class
/// attributions are always neutral.
pub fn bucket_for(class: SentimentLabel, weight: f64, thresholds: BucketThresholds) -> ColorBucket {
    let direction = match class {
        SentimentLabel::Neutral => return ColorBucket::Neutral,
        SentimentLabel::Positive => 1.0,
        SentimentLabel::Negative => -1.0,
    };
    let magnitude = weight.abs();
    let positive = direction * weight > 0.0;
    match (magnitude >= thresholds.strong, magnitude >= thresholds.weak, positive) {
        (true, _, true) => ColorBucket::StrongPositive,
        (true, _, false) => ColorBucket::StrongNegative,
        (false, true, true) => ColorBucket::WeakPositive,
        (false, true, false) => ColorBucket::WeakNegative,
        (false, false, _) => ColorBucket::Neutral,
    }
}

pub fn bucketize(explanation: &Explanation, thresholds: BucketThresholds) -> Result<Vec<ColorBucket>, ExplainError> {
    thresholds.validate()?;
    Ok(explanation
        .tokens
        .iter()
        .map(|t| bucket_for(t.class, t.weight, thresholds))
        .collect())
}

/// Serialized form consumed by the web client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub text: String,
    pub tokens: Vec<HighlightedToken>,
    pub predicted: SentimentLabel,
    pub fidelity: f64,
    pub sample_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedToken {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub class: SentimentLabel,
    pub weight: f64,
    pub bucket: ColorBucket,
    pub color: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_model(_: &str) -> Prediction {
        Prediction::from_scores([0.2, 0.5, 0.3])
    }

    #[test]
    fn empty_text_is_an_error() {
        let cfg = ExplainConfig::default();
        assert_eq!(
            explain(&constant_model, " ,. ", &cfg).unwrap_err(),
            ExplainError::EmptyText
        );
        assert_eq!(
            explain_exhaustive(&constant_model, "", &cfg).unwrap_err(),
            ExplainError::EmptyText
        );
    }

    #[test]
    fn constant_model_has_zero_weights_and_unit_fidelity() {
        let e = explain(&constant_model, "one two three four five", &ExplainConfig::default()).unwrap();
        assert_eq!(e.tokens.len(), 5);
        for t in &e.tokens {
            for c in SentimentLabel::ALL {
                assert!(t.class_weights.get(c).abs() < 1e-9);
            }
        }
        assert_eq!(e.fidelity, 1.0);
        assert_eq!(e.sample_count, 500);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let model = |text: &str| {
            let n = text.matches("good").count() as f64;
            Prediction::from_scores([1.0, 1.0, 1.0 + n])
        };
        let cfg = ExplainConfig {
            seed: 42,
            ..Default::default()
        };
        let a = explain(&model, "a good day and a good night", &cfg).unwrap();
        let b = explain(&model, "a good day and a good night", &cfg).unwrap();
        assert_eq!(a, b);
        let c = explain(
            &model,
            "a good day and a good night",
            &ExplainConfig { seed: 43, ..cfg },
        )
        .unwrap();
        assert_ne!(a.tokens[1].weight.to_bits(), c.tokens[1].weight.to_bits());
    }

    #[test]
    fn duplicate_words_are_separate_features() {
        let model = |text: &str| {
            let n = text.matches("good").count() as f64;
            Prediction::from_scores([1.0, 1.0, 1.0 + n])
        };
        let e = explain_exhaustive(&model, "good and good", &ExplainConfig::default()).unwrap();
        assert_eq!(e.tokens.len(), 3);
        assert_eq!(e.tokens[0].token, "good");
        assert_eq!(e.tokens[2].token, "good");
        assert_ne!(e.tokens[0].start, e.tokens[2].start);
        assert!((e.tokens[0].weight - e.tokens[2].weight).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_size_guard() {
        let long = vec!["w"; MAX_EXHAUSTIVE_TOKENS + 1].join(" ");
        assert_eq!(
            explain_exhaustive(&constant_model, &long, &ExplainConfig::default()).unwrap_err(),
            ExplainError::TooManyTokens(MAX_EXHAUSTIVE_TOKENS + 1)
        );
    }

    #[test]
    fn distance_and_kernel() {
        assert_eq!(cosine_distance(&[true, true]), 0.0);
        assert_eq!(cosine_distance(&[false, false]), 1.0);
        assert!((cosine_distance(&[true, false, false, false]) - 0.5).abs() < 1e-12);
        assert_eq!(kernel_weight(0.0, 1.0), 1.0);
        assert!((kernel_weight(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bucket_rules() {
        let th = BucketThresholds { weak: 0.1, strong: 0.5 };
        use SentimentLabel::*;
        assert_eq!(bucket_for(Positive, 0.9, th), ColorBucket::StrongPositive);
        assert_eq!(bucket_for(Positive, -0.9, th), ColorBucket::StrongNegative);
        assert_eq!(bucket_for(Negative, 0.9, th), ColorBucket::StrongNegative);
        assert_eq!(bucket_for(Negative, 0.2, th), ColorBucket::WeakNegative);
        assert_eq!(bucket_for(Positive, 0.1, th), ColorBucket::WeakPositive);
        assert_eq!(bucket_for(Positive, 0.5, th), ColorBucket::StrongPositive);
        assert_eq!(bucket_for(Positive, 0.09, th), ColorBucket::Neutral);
        assert_eq!(bucket_for(Neutral, 0.9, th), ColorBucket::Neutral);
        assert_eq!(bucket_for(Positive, 0.0, th), ColorBucket::Neutral);
    }

    #[test]
    fn bad_thresholds_rejected() {
        let e = explain(&constant_model, "a b c d e", &ExplainConfig::default()).unwrap();
        for (weak, strong) in [(0.0, 0.5), (0.5, 0.5), (0.6, 0.5), (-0.1, 0.2)] {
            assert!(matches!(
                bucketize(&e, BucketThresholds { weak, strong }),
                Err(ExplainError::BadThresholds { .. })
            ));
        }
        let all = bucketize(&e, BucketThresholds { weak: 0.1, strong: 0.5 }).unwrap();
        assert!(all.iter().all(|b| *b == ColorBucket::Neutral));
    }

    #[test]
    fn palette_is_pinned() {
        let colors: Vec<&str> = [
            ColorBucket::StrongNegative,
            ColorBucket::WeakNegative,
            ColorBucket::Neutral,
            ColorBucket::WeakPositive,
            ColorBucket::StrongPositive,
        ]
        .iter()
        .map(|b| b.hex())
        .collect();
        assert_eq!(colors, ["#d73027", "#fc8d59", "#ffffbf", "#91cf60", "#1a9850"]);
        assert_eq!(ColorBucket::StrongPositive.rgb(), (0x1a, 0x98, 0x50));
        assert_eq!(
            serde_json::to_string(&ColorBucket::WeakNegative).unwrap(),
            "\"weak-negative\""
        );
    }
}
