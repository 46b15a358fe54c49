//! Glue between stages: labeling a corpus, fitting features on the training
//! partition and turning contextualized records into model examples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contextualize::ContextualizedRecord;
use crate::corpus::{Conversation, UtteranceKey};
use crate::curation::{curate_utterance, CleanUtterance, CurationConfig};
use crate::error::{Error, Result};
use crate::features::{document_terms, extract_features, tfidf_fit, FeatureBundle, Lexicons, Vocabulary};
use crate::model::{assemble_vector, Dataset, Example, FeatureLayout, TrainConfig};
use crate::split::{Partition, Split};
use crate::taxonomy::{target_vector, ConsolidationMap, IntentLabeling, LabelMode, LabelSpace};

pub fn curate_corpus(corpus: &[Conversation], config: &CurationConfig) -> Vec<CleanUtterance> {
    corpus
        .iter()
        .flat_map(|c| {
            c.utterances
                .iter()
                .map(|u| curate_utterance(&c.conversation_id, u, config))
        })
        .collect()
}

/// What the lexicons contribute to the feature layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconShape {
    pub entity_types: Vec<String>,
    pub keywords: Vec<String>,
}

impl LexiconShape {
    pub fn of(lexicons: &Lexicons) -> Self {
        LexiconShape {
            entity_types: lexicons.gazetteer.entity_types(),
            keywords: lexicons.keywords.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Featurized {
    pub vocabulary: Vocabulary,
    pub bundles: Vec<FeatureBundle>,
}

/// Fits the vocabulary on utterances of training conversations only, then
/// extracts a bundle for every utterance.
pub fn featurize(clean: &[CleanUtterance], split: &Split, lexicons: &Lexicons) -> Result<Featurized> {
    let train_docs: Vec<Vec<String>> = clean
        .iter()
        .filter(|c| split.partition_of(&c.source.conversation_id) == Some(Partition::Train))
        .map(document_terms)
        .collect();
    let vocabulary = tfidf_fit(&train_docs)?;
    let bundles = clean
        .iter()
        .map(|c| extract_features(c, &vocabulary, lexicons))
        .collect();
    Ok(Featurized { vocabulary, bundles })
}

pub fn label_corpus(
    corpus: &[Conversation],
    map: &ConsolidationMap,
) -> Result<BTreeMap<UtteranceKey, IntentLabeling>> {
    let mut labelings = BTreeMap::new();
    for c in corpus {
        for u in &c.utterances {
            labelings.insert(c.key(u), IntentLabeling::new(&u.raw_tags, map)?);
        }
    }
    Ok(labelings)
}

/// Raw mode labels are the tags of the consolidation map, sorted.
pub fn label_space(mode: LabelMode, map: &ConsolidationMap) -> LabelSpace {
    LabelSpace::new(mode, map.mapping.keys())
}

/// Examples for every record, keyed to its feature bundle.
pub fn build_examples(
    records: &[ContextualizedRecord],
    bundles: &[FeatureBundle],
    layout: &FeatureLayout,
    vocabulary: &Vocabulary,
    config: &TrainConfig,
    space: &LabelSpace,
) -> Result<Vec<Example>> {
    let by_key: BTreeMap<&UtteranceKey, &FeatureBundle> = bundles.iter().map(|b| (&b.source, b)).collect();
    records
        .iter()
        .map(|r| {
            let bundle = by_key
                .get(&r.source)
                .ok_or_else(|| Error::MissingKey(format!("feature bundle {}", r.source)))?;
            Ok(Example {
                key: r.source.clone(),
                input: assemble_vector(bundle, &r.lemmas, &r.context(), layout, vocabulary, config),
                target: target_vector(&r.labeling, space),
                polarity: r.polarity,
            })
        })
        .collect()
}

/// Training data plus the held-out test examples.
pub struct Prepared {
    pub dataset: Dataset,
    pub test: Vec<Example>,
}

pub fn prepare(
    records: &[ContextualizedRecord],
    bundles: &[FeatureBundle],
    vocabulary: &Vocabulary,
    shape: &LexiconShape,
    split: &Split,
    map: &ConsolidationMap,
    config: &TrainConfig,
) -> Result<Prepared> {
    let layout = FeatureLayout::from_parts(
        vocabulary.len(),
        shape.entity_types.clone(),
        shape.keywords.clone(),
        config,
    );
    let space = label_space(config.label_mode, map);
    let examples = build_examples(records, bundles, &layout, vocabulary, config, &space)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for ex in examples {
        match split.partition_of(&ex.key.conversation_id) {
            Some(Partition::Train) => train.push(ex),
            Some(Partition::Validation) => valid.push(ex),
            Some(Partition::Test) => test.push(ex),
            None => {
                return Err(Error::Data(format!(
                    "conversation {} is in no split partition",
                    ex.key.conversation_id
                )))
            }
        }
    }
    Ok(Prepared {
        dataset: Dataset {
            label_space: space,
            layout,
            vocabulary: vocabulary.clone(),
            train,
            valid,
        },
        test,
    })
}
