//! Per-utterance records joining text, features, labels and turn context,
//! plus weight attribution for trained linear models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Actor, Conversation, UtteranceKey};
use crate::curation::CleanUtterance;
use crate::error::{Error, Result};
use crate::features::{word_frequency, FeatureBundle, Polarity};
use crate::model::{Checkpoint, ModelParams, TrainedModel, UtteranceContext};
use crate::taxonomy::{Category, IntentLabeling};
use crate::util::sha256_hex;

/// How many of the most frequent words a record keeps.
pub const TOP_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualizedRecord {
    pub source: UtteranceKey,
    pub actor: Actor,
    pub position: usize,
    pub conversation_length: usize,
    /// Tokens left after stopword removal.
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub sentiment_score: i64,
    pub polarity: Polarity,
    pub top_words: Vec<(String, usize)>,
    pub entity_types: BTreeSet<String>,
    pub labeling: IntentLabeling,
    /// Categories of the preceding turn; empty for the first turn.
    pub previous_categories: BTreeSet<Category>,
}

impl ContextualizedRecord {
    pub fn context(&self) -> UtteranceContext {
        UtteranceContext {
            position: self.position,
            conversation_length: self.conversation_length,
            actor: self.actor,
        }
    }
}

fn index_by_key<'a, T>(
    items: &'a [T],
    key: impl Fn(&T) -> &UtteranceKey,
    what: &str,
) -> Result<BTreeMap<&'a UtteranceKey, &'a T>> {
    let mut map = BTreeMap::new();
    for item in items {
        if map.insert(key(item), item).is_some() {
            return Err(Error::Data(format!("duplicate {what} for {}", key(item))));
        }
    }
    Ok(map)
}

/// Joins the four inputs into one record per utterance, in corpus order.
/// Every corpus utterance must appear in every other input and no input may
/// carry keys the corpus lacks.
pub fn contextualize(
    corpus: &[Conversation],
    clean: &[CleanUtterance],
    bundles: &[FeatureBundle],
    labelings: &BTreeMap<UtteranceKey, IntentLabeling>,
) -> Result<Vec<ContextualizedRecord>> {
    let clean_by_key = index_by_key(clean, |c| &c.source, "curated utterance")?;
    let bundle_by_key = index_by_key(bundles, |b| &b.source, "feature bundle")?;
    let missing = |what: &str, key: &UtteranceKey| Error::MissingKey(format!("{what} {key}"));

    let mut records = Vec::new();
    for conv in corpus {
        let mut previous: Option<&IntentLabeling> = None;
        for utt in &conv.utterances {
            let key = conv.key(utt);
            let c = clean_by_key
                .get(&key)
                .ok_or_else(|| missing("curated utterance", &key))?;
            let b = bundle_by_key
                .get(&key)
                .ok_or_else(|| missing("feature bundle", &key))?;
            let labeling = labelings.get(&key).ok_or_else(|| missing("labeling", &key))?;
            let tokens = c.kept_tokens();
            records.push(ContextualizedRecord {
                top_words: word_frequency(&tokens, TOP_WORDS),
                tokens,
                lemmas: c.kept_lemmas(),
                sentiment_score: b.sentiment.score,
                polarity: b.sentiment.polarity,
                entity_types: b.entities.iter().map(|e| e.entity_type.clone()).collect(),
                labeling: labeling.clone(),
                previous_categories: previous.map(|l| l.categories.clone()).unwrap_or_default(),
                actor: utt.actor,
                position: utt.position,
                conversation_length: conv.utterances.len(),
                source: key,
            });
            previous = Some(labeling);
        }
    }

    let known: BTreeSet<&UtteranceKey> = records.iter().map(|r| &r.source).collect();
    let extras = [
        (
            "curated utterances",
            clean_by_key.keys().copied().find(|k| !known.contains(k)),
        ),
        (
            "feature bundles",
            bundle_by_key.keys().copied().find(|k| !known.contains(k)),
        ),
        ("labelings", labelings.keys().find(|k| !known.contains(k))),
    ];
    for (what, extra) in extras {
        if let Some(k) = extra {
            return Err(Error::MissingKey(format!(
                "corpus utterance {k} (present in {what})"
            )));
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub feature_index: usize,
    pub feature_name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAttribution {
    pub label: String,
    /// Nonzero weights by |weight| descending, ties by feature name.
    pub ranking: Vec<FeatureWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    /// SHA-256 of the serialized checkpoint.
    pub model_version: String,
    pub generated_at: String,
    pub labels: Vec<LabelAttribution>,
}

impl AttributionReport {
    /// Keeps the first `k` entries of every ranking.
    pub fn truncated(mut self, k: usize) -> Self {
        for l in &mut self.labels {
            l.ranking.truncate(k);
        }
        self
    }
}

/// Attributes each label's decision to features by the magnitude of the
/// linear head's weights.
pub fn reverse_feature_report(
    model: &TrainedModel,
    feature_names: &[String],
    generated_at: &str,
) -> Result<AttributionReport> {
    let ModelParams::Linear { weight, .. } = &model.params else {
        return Err(Error::Config("attribution requires the linear head".into()));
    };
    if feature_names.len() != weight.cols {
        return Err(Error::Dimension(format!(
            "{} feature names for a model with {} features",
            feature_names.len(),
            weight.cols
        )));
    }
    let labels = model
        .label_space
        .labels
        .iter()
        .enumerate()
        .map(|(l, label)| {
            let mut ranking: Vec<FeatureWeight> = weight
                .row(l)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| FeatureWeight {
                    feature_index: i,
                    feature_name: feature_names[i].clone(),
                    weight: *w,
                })
                .collect();
            ranking.sort_by(|a, b| {
                b.weight
                    .abs()
                    .total_cmp(&a.weight.abs())
                    .then_with(|| a.feature_name.cmp(&b.feature_name))
            });
            LabelAttribution {
                label: label.clone(),
                ranking,
            }
        })
        .collect();
    Ok(AttributionReport {
        model_version: sha256_hex(&Checkpoint::from_model(model).to_bytes()?),
        generated_at: generated_at.to_string(),
        labels,
    })
}
