use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::assemble::FeatureLayout;
use super::params::ModelParams;
use super::train::{EpochStats, TrainedModel};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::taxonomy::LabelSpace;

pub const CHECKPOINT_FORMAT: &str = "intent-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-epoch metrics as stored on disk. Wall-clock time is left out so that
/// two runs with the same seed produce byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpochRecord {
    epoch: usize,
    train_loss: f64,
    valid_loss: f64,
    valid_accuracy: f64,
    valid_argmax_accuracy: f64,
}

/// Serialized form of a [`TrainedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format: String,
    version: u32,
    config: TrainConfig,
    label_space: LabelSpace,
    layout: FeatureLayout,
    vocabulary_hash: String,
    vocabulary: Vocabulary,
    training_conversations: BTreeSet<String>,
    history: Vec<EpochRecord>,
    params: ModelParams,
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            label_space: model.label_space.clone(),
            layout: model.layout.clone(),
            vocabulary_hash: model.vocabulary.fingerprint(),
            vocabulary: model.vocabulary.clone(),
            training_conversations: model.training_conversations.clone(),
            history: model
                .history
                .iter()
                .map(|h| EpochRecord {
                    epoch: h.epoch,
                    train_loss: h.train_loss,
                    valid_loss: h.valid_loss,
                    valid_accuracy: h.valid_accuracy,
                    valid_argmax_accuracy: h.valid_argmax_accuracy,
                })
                .collect(),
            params: model.params.clone(),
        }
    }

    /// Rebuilds the model. Elapsed times are not stored and come back as 0.
    pub fn into_model(self) -> Result<TrainedModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.vocabulary.fingerprint() != self.vocabulary_hash {
            return Err(Error::Data("checkpoint vocabulary hash mismatch".into()));
        }
        if self.params.labels() != self.label_space.len() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} output rows for {} labels",
                self.params.labels(),
                self.label_space.len()
            )));
        }
        Ok(TrainedModel {
            history: self
                .history
                .into_iter()
                .map(|r| EpochStats {
                    epoch: r.epoch,
                    train_loss: r.train_loss,
                    valid_loss: r.valid_loss,
                    valid_accuracy: r.valid_accuracy,
                    valid_argmax_accuracy: r.valid_argmax_accuracy,
                    elapsed_secs: 0.0,
                })
                .collect(),
            config: self.config,
            label_space: self.label_space,
            layout: self.layout,
            vocabulary: self.vocabulary,
            params: self.params,
            training_conversations: self.training_conversations,
        })
    }

    pub fn vocabulary_hash(&self) -> &str {
        &self.vocabulary_hash
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Data(format!("checkpoint: {e}")))
    }
}
