//! Operator configuration, loaded from TOML.
//!
//! ```toml
//! seed = 7
//! min_word_count = 5
//!
//! [payment]            # dollars
//! base = 0.01
//! fail_bonus = 0.05
//! category_bonus = 0.05
//! per_judgment = 0.016
//!
//! [prompt]             # defaults for new sessions
//! show_explanation = true
//! starting_point = true
//!
//! [explainer]
//! sample_count = 500
//! ridge_penalty = 1.0
//! seed = 0
//! # kernel_width = 2.0  (default 0.75 * sqrt(tokens))
//!
//! [highlight]
//! weak = 0.02
//! strong = 0.1
//!
//! [validation]
//! quorum = 5
//! batch_size = 10
//! gold_rate = 0.1
//! gold_min_answers = 5
//! gold_accuracy_threshold = 0.7
//!
//! [analytics]
//! weight_human = 0.5
//! weight_ai = 0.5
//! low_threshold = 0.6
//! high_threshold = 0.8
//! cloud_threshold = 0.05
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::{SeverityThresholds, SeverityWeights};
use crate::error::{Error, Result};
use crate::explainer::{BucketThresholds, ExplainConfig};
use crate::pipeline::{PaymentRates, PromptCondition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    /// Root of every seeded random choice the platform makes.
    pub seed: u64,
    pub min_word_count: usize,
    pub payment: PaymentRates,
    pub prompt: PromptCondition,
    pub explainer: ExplainConfig,
    pub highlight: BucketThresholds,
    pub validation: ValidationConfig,
    pub analytics: AnalyticsConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            seed: 0,
            min_word_count: 5,
            payment: PaymentRates::default(),
            prompt: PromptCondition {
                show_explanation: true,
                starting_point: true,
            },
            explainer: ExplainConfig::default(),
            highlight: BucketThresholds::default(),
            validation: ValidationConfig::default(),
            analytics: AnalyticsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub quorum: usize,
    pub batch_size: usize,
    pub gold_rate: f64,
    pub gold_min_answers: usize,
    pub gold_accuracy_threshold: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            quorum: 5,
            batch_size: 10,
            gold_rate: 0.1,
            gold_min_answers: 5,
            gold_accuracy_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub weight_human: f64,
    pub weight_ai: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
    /// Minimum max-normalized attribution for a word to enter the cloud.
    pub cloud_threshold: f64,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            weight_human: 0.5,
            weight_ai: 0.5,
            low_threshold: 0.6,
            high_threshold: 0.8,
            cloud_threshold: 0.05,
        }
    }
}

impl AnalyticsConfig {
    pub fn weights(&self) -> SeverityWeights {
        SeverityWeights {
            human: self.weight_human,
            ai: self.weight_ai,
        }
    }

    pub fn thresholds(&self) -> SeverityThresholds {
        SeverityThresholds {
            low: self.low_threshold,
            high: self.high_threshold,
        }
    }
}

impl PlatformConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PlatformConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.min_word_count == 0 {
            return bad("min_word_count must be positive");
        }
        if self.validation.quorum == 0 || self.validation.batch_size == 0 {
            return bad("quorum and batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.validation.gold_rate)
            || !(0.0..=1.0).contains(&self.validation.gold_accuracy_threshold)
        {
            return bad("gold_rate and gold_accuracy_threshold must lie in [0, 1]");
        }
        self.payment.validate()?;
        self.highlight.validate()?;
        self.analytics.weights().validate()?;
        self.analytics.thresholds().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses_to_defaults() {
        let doc = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = PlatformConfig::from_toml_str(&doc).unwrap();
        assert_eq!(
            cfg,
            PlatformConfig {
                seed: 7,
                ..Default::default()
            }
        );
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(PlatformConfig::from_toml_str("").unwrap(), PlatformConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PlatformConfig::from_toml_str("bogus = 1").is_err());
        assert!(PlatformConfig::from_toml_str("[analytics]\nweight_human = 0.7").is_err());
        assert!(PlatformConfig::from_toml_str("[highlight]\nweak = 0.3\nstrong = 0.2").is_err());
        assert!(PlatformConfig::from_toml_str("min_word_count = 0").is_err());
    }
}
