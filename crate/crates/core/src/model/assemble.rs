use serde::{Deserialize, Serialize};

use super::network::ModelInput;
use super::TrainConfig;
use crate::corpus::Actor;
use crate::features::{FeatureBundle, Lexicons, SparseVector, Vocabulary};

/// Where an utterance sits in its conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceContext {
    pub position: usize,
    pub conversation_length: usize,
    pub actor: Actor,
}

/// Column layout of the assembled feature vector: the TF-IDF block followed
/// by the engineered scalars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub vocab_size: usize,
    pub entity_types: Vec<String>,
    /// Empty unless frequency features are enabled.
    pub keywords: Vec<String>,
    pub include_frequency_features: bool,
}

const SENTIMENT_SCORE: usize = 0;
const POLARITY_POSITIVE: usize = 1;
const POLARITY_NEGATIVE: usize = 2;
const ENTITY_BASE: usize = 3;

impl FeatureLayout {
    pub fn new(vocab: &Vocabulary, lexicons: &Lexicons, config: &TrainConfig) -> Self {
        Self::from_parts(
            vocab.len(),
            lexicons.gazetteer.entity_types(),
            lexicons.keywords.iter().cloned().collect(),
            config,
        )
    }

    /// `entity_types` and `keywords` must be sorted; keywords are dropped
    /// unless frequency features are enabled.
    pub fn from_parts(
        vocab_size: usize,
        entity_types: Vec<String>,
        keywords: Vec<String>,
        config: &TrainConfig,
    ) -> Self {
        FeatureLayout {
            vocab_size,
            entity_types,
            keywords: if config.include_frequency_features {
                keywords
            } else {
                Vec::new()
            },
            include_frequency_features: config.include_frequency_features,
        }
    }

    fn turn_position(&self) -> usize {
        self.vocab_size + ENTITY_BASE + self.entity_types.len()
    }

    fn actor_flag(&self) -> usize {
        self.turn_position() + 1
    }

    fn keyword_base(&self) -> usize {
        self.actor_flag() + 1
    }

    fn verb_count(&self) -> usize {
        self.keyword_base() + self.keywords.len()
    }

    pub fn engineered_width(&self) -> usize {
        let base = ENTITY_BASE + self.entity_types.len() + 2;
        if self.include_frequency_features {
            base + self.keywords.len() + 1
        } else {
            base
        }
    }

    pub fn width(&self) -> usize {
        self.vocab_size + self.engineered_width()
    }

    /// Number of token ids for the attention head; the last is the unknown
    /// token.
    pub fn token_ids(&self) -> usize {
        self.vocab_size + 1
    }

    /// Human-readable name of every column.
    pub fn feature_names(&self, vocab: &Vocabulary) -> Vec<String> {
        let mut names: Vec<String> = vocab.terms().iter().map(|t| format!("tfidf:{t}")).collect();
        names.push("sentiment_score".into());
        names.push("polarity:positive".into());
        names.push("polarity:negative".into());
        names.extend(self.entity_types.iter().map(|t| format!("entity:{t}")));
        names.push("turn_position".into());
        names.push("actor_user".into());
        if self.include_frequency_features {
            names.extend(self.keywords.iter().map(|k| format!("keyword:{k}")));
            names.push("verb_count".into());
        }
        names
    }
}

/// Concatenates the TF-IDF vector with the engineered scalars and maps the
/// lemmas to token ids truncated to `max_sequence_length`.
///
/// The polarity columns are indicators for positive and negative, so a
/// neutral utterance has both at zero. The actor flag is +1 for users and -1
/// for agents.
pub fn assemble_vector(
    bundle: &FeatureBundle,
    lemmas: &[String],
    context: &UtteranceContext,
    layout: &FeatureLayout,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> ModelInput {
    let base = layout.vocab_size;
    let mut entries: Vec<(usize, f64)> = bundle
        .tfidf
        .entries
        .iter()
        .copied()
        .filter(|(i, _)| *i < base)
        .collect();

    let mut push = |index: usize, value: f64| {
        if value != 0.0 {
            entries.push((index, value));
        }
    };
    push(base + SENTIMENT_SCORE, bundle.sentiment.score as f64);
    push(
        base + POLARITY_POSITIVE,
        f64::from(u8::from(bundle.sentiment.score > 0)),
    );
    push(
        base + POLARITY_NEGATIVE,
        f64::from(u8::from(bundle.sentiment.score < 0)),
    );
    for (k, ty) in layout.entity_types.iter().enumerate() {
        let count = bundle.entities.iter().filter(|e| &e.entity_type == ty).count();
        push(base + ENTITY_BASE + k, count as f64);
    }
    let fraction = if context.conversation_length > 0 {
        context.position as f64 / context.conversation_length as f64
    } else {
        0.0
    };
    push(layout.turn_position(), fraction);
    push(
        layout.actor_flag(),
        match context.actor {
            Actor::User => 1.0,
            Actor::Agent => -1.0,
        },
    );
    if layout.include_frequency_features {
        for (k, keyword) in layout.keywords.iter().enumerate() {
            let count = bundle.keyword_freq.get(keyword).copied().unwrap_or(0);
            push(layout.keyword_base() + k, count as f64);
        }
        push(
            layout.verb_count(),
            bundle.verb_freq.values().sum::<usize>() as f64,
        );
    }

    let unknown = layout.vocab_size;
    let tokens = lemmas
        .iter()
        .take(config.max_sequence_length)
        .map(|l| vocab.index_of(l).filter(|i| *i < unknown).unwrap_or(unknown))
        .collect();

    ModelInput {
        features: SparseVector {
            dim: layout.width(),
            entries,
        },
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UtteranceKey;
    use crate::curation::{curate_text, CurationConfig};
    use crate::features::{document_terms, extract_features, tfidf_fit};

    fn setup(text: &str) -> (FeatureBundle, Vec<String>, Vocabulary, Lexicons) {
        let clean = curate_text(UtteranceKey::new("c", "u"), text, &CurationConfig::default());
        let vocab = tfidf_fit(&[document_terms(&clean), vec!["printer".to_string()]]).unwrap();
        let lexicons = Lexicons::default();
        let bundle = extract_features(&clean, &vocab, &lexicons);
        (bundle, clean.kept_lemmas(), vocab, lexicons)
    }

    #[test]
    fn empty_utterance_has_only_actor_flag() {
        let (bundle, lemmas, vocab, lexicons) = setup("");
        let config = TrainConfig::default();
        let layout = FeatureLayout::new(&vocab, &lexicons, &config);
        let ctx = UtteranceContext {
            position: 0,
            conversation_length: 3,
            actor: Actor::User,
        };
        let input = assemble_vector(&bundle, &lemmas, &ctx, &layout, &vocab, &config);
        assert_eq!(input.features.entries, vec![(layout.actor_flag(), 1.0)]);
        assert!(input.tokens.is_empty());
    }

    #[test]
    fn width_is_constant() {
        let config = TrainConfig::default();
        let (b1, l1, vocab, lexicons) = setup("Windows 10 crashed again, thanks");
        let layout = FeatureLayout::new(&vocab, &lexicons, &config);
        let ctx = UtteranceContext {
            position: 2,
            conversation_length: 4,
            actor: Actor::Agent,
        };
        let a = assemble_vector(&b1, &l1, &ctx, &layout, &vocab, &config);
        let (b2, l2, _, _) = setup("");
        let b = assemble_vector(&b2, &l2, &ctx, &layout, &vocab, &config);
        assert_eq!(a.features.dim, b.features.dim);
        assert_eq!(a.features.dim, vocab.len() + layout.engineered_width());
        assert_eq!(layout.feature_names(&vocab).len(), layout.width());
        assert!(a.features.get(layout.turn_position()) == 0.5);
        let product = layout.entity_types.iter().position(|t| t == "PRODUCT").unwrap();
        assert_eq!(a.features.get(vocab.len() + ENTITY_BASE + product), 1.0);
    }

    #[test]
    fn long_utterances_are_truncated() {
        let config = TrainConfig::default();
        let text = (0..400).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let (bundle, lemmas, vocab, lexicons) = setup(&text);
        assert_eq!(lemmas.len(), 400);
        let layout = FeatureLayout::new(&vocab, &lexicons, &config);
        let ctx = UtteranceContext {
            position: 0,
            conversation_length: 1,
            actor: Actor::User,
        };
        let input = assemble_vector(&bundle, &lemmas, &ctx, &layout, &vocab, &config);
        assert_eq!(input.tokens.len(), 384);
    }

    #[test]
    fn frequency_features_extend_layout() {
        let config = TrainConfig {
            include_frequency_features: true,
            ..TrainConfig::default()
        };
        let (bundle, lemmas, vocab, lexicons) = setup("reset password, reset account, installing");
        let layout = FeatureLayout::new(&vocab, &lexicons, &config);
        let ctx = UtteranceContext {
            position: 0,
            conversation_length: 1,
            actor: Actor::User,
        };
        let input = assemble_vector(&bundle, &lemmas, &ctx, &layout, &vocab, &config);
        let k = layout.keywords.iter().position(|w| w == "reset").unwrap();
        assert_eq!(input.features.get(layout.keyword_base() + k), 2.0);
        assert_eq!(layout.feature_names(&vocab).len(), layout.width());
    }
}
