//! Classifier heads trained from scratch with AdamW.
//!
//! Two heads are available: a linear head over the assembled TF-IDF plus
//! engineered features, and a single-block self-attention encoder over
//! lemma ids. Multi-label modes squash each logit with the logistic
//! function; the single-label mode uses softmax.

mod assemble;
mod checkpoint;
pub mod gradcheck;
pub mod matrix;
mod network;
mod optim;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_vector, FeatureLayout, UtteranceContext};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{
    accumulate_gradient, activate, batch_loss, forward, gradients, log_sum_exp, logits, loss_from_logits,
    loss_from_probabilities, sigmoid, softmax, ModelInput, Output,
};
pub use optim::{adamw_step, AdamState, AdamWSettings};
pub use params::{ModelDims, ModelParams, INIT_RANGE};
pub use train::{
    argmax, decide, named_rng, predict, train, train_per_sentiment, Dataset, EpochStats, Example,
    IntentPrediction, TrainedModel,
};

use crate::error::{Error, Result};
use crate::taxonomy::LabelMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Linear,
    Attention,
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Head::Linear),
            "attention" => Ok(Head::Attention),
            _ => Err(Error::Config(format!("unknown head {s:?}"))),
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Linear => "linear",
            Head::Attention => "attention",
        })
    }
}

/// Training hyperparameters. Defaults follow the reference fine-tuning
/// setup: sequence length 384, batch 16, learning rate 5e-5, epsilon 1e-8,
/// five epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_sequence_length: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    #[serde(with = "label_mode_name")]
    pub label_mode: LabelMode,
    pub head: Head,
    pub decision_threshold: f64,
    /// Width of the attention encoder.
    pub model_width: usize,
    /// Append keyword counts and the verb count to the linear features.
    pub include_frequency_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_sequence_length: 384,
            batch_size: 16,
            learning_rate: 5e-5,
            adam_epsilon: 1e-8,
            epochs: 5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            seed: 42,
            label_mode: LabelMode::ConsolidatedMultiLabel,
            head: Head::Linear,
            decision_threshold: 0.5,
            model_width: 32,
            include_frequency_features: false,
        }
    }
}

impl TrainConfig {
    pub fn from_json(source: &str) -> Result<Self> {
        let config: TrainConfig =
            serde_json::from_str(source).map_err(|e| Error::Config(format!("train config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("train config: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return fail("adam_epsilon must be positive");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.max_sequence_length == 0 {
            return fail("max_sequence_length must be at least 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return fail(&format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return fail("decision_threshold must lie in (0, 1)");
        }
        if self.head == Head::Attention && self.model_width == 0 {
            return fail("model_width must be at least 1");
        }
        Ok(())
    }
}

pub(crate) mod label_mode_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::taxonomy::LabelMode;

    pub fn serialize<S: Serializer>(mode: &LabelMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match mode {
            LabelMode::RawMultiLabel => "raw",
            LabelMode::ConsolidatedMultiLabel => "consolidated",
            LabelMode::ConsolidatedSingle => "single",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LabelMode, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.max_sequence_length, c.batch_size, c.epochs), (384, 16, 5));
        assert_eq!((c.learning_rate, c.adam_epsilon), (5e-5, 1e-8));
    }

    #[test]
    fn config_parses_partial_json() {
        let c = TrainConfig::from_json(
            r#"{"learning_rate": 0.005, "label_mode": "single", "head": "attention"}"#,
        )
        .unwrap();
        assert_eq!(c.learning_rate, 0.005);
        assert_eq!(c.label_mode, LabelMode::ConsolidatedSingle);
        assert_eq!(c.head, Head::Attention);
        assert_eq!(c.batch_size, 16);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for json in [
            r#"{"epochs": 0}"#,
            r#"{"learning_rate": 0}"#,
            r#"{"adam_epsilon": -1}"#,
            r#"{"beta1": 1.0}"#,
            r#"{"decision_threshold": 1.5}"#,
            r#"{"unknown": 1}"#,
        ] {
            assert!(TrainConfig::from_json(json).unwrap_err().is_config(), "{json}");
        }
    }
}
