//! Feature extraction and enrichment for curated utterances.
//!
//! Every extractor is a pure function of its inputs. Lexicons are plain
//! UTF-8 tables (`surface<TAB>value`) so they can be audited and replaced.

mod ner;
mod pos;
mod sentiment;
mod tfidf;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ner::{ner_extract, Entity, Gazetteer};
pub use pos::{pos_tag, PosTag, PosTagger};
pub use sentiment::{sentiment, Polarity, SentimentLexicon, SentimentResult};
pub use tfidf::{tfidf_fit, tfidf_transform, SparseVector, Vocabulary};

use crate::corpus::UtteranceKey;
use crate::curation::CleanUtterance;
use crate::error::{Error, Result};
use crate::util::{parse_pairs, parse_table};

const DEFAULT_POS: &str = include_str!("../../data/lexicons/pos.tsv");
const DEFAULT_GAZETTEER: &str = include_str!("../../data/lexicons/gazetteer.tsv");
const DEFAULT_SENTIMENT: &str = include_str!("../../data/lexicons/sentiment.tsv");
const DEFAULT_THESAURUS: &str = include_str!("../../data/lexicons/thesaurus.tsv");
const DEFAULT_KEYWORDS: &str = include_str!("../../data/lexicons/keywords.txt");

pub const LEXICON_FILES: [&str; 5] = [
    "pos.tsv",
    "gazetteer.tsv",
    "sentiment.tsv",
    "thesaurus.tsv",
    "keywords.txt",
];

pub fn count_tokens<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_string()).or_default() += 1;
    }
    counts
}

/// The `top_k` most frequent tokens, count descending, ties broken by the
/// token in ascending order.
pub fn word_frequency<S: AsRef<str>>(tokens: &[S], top_k: usize) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = count_tokens(tokens).into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    ranked
}

#[derive(Debug, Clone, Default)]
pub struct Thesaurus {
    entries: BTreeMap<String, Vec<String>>,
}

impl Thesaurus {
    /// Reads `word<TAB>syn1,syn2,...` rows.
    pub fn from_table(source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (word, synonyms) in parse_pairs(source, "thesaurus")? {
            let list = synonyms
                .split(',')
                .map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect();
            entries.insert(word.to_lowercase(), list);
        }
        Ok(Thesaurus { entries })
    }

    pub fn insert(&mut self, word: &str, synonyms: &[&str]) {
        self.entries
            .insert(word.to_string(), synonyms.iter().map(|s| s.to_string()).collect());
    }
}

/// Exact-match lookup. The query word itself and repeats are filtered out.
pub fn synonyms_lookup(token: &str, thesaurus: &Thesaurus) -> Vec<String> {
    let mut seen = BTreeSet::new();
    thesaurus
        .entries
        .get(token)
        .map(|list| {
            list.iter()
                .filter(|s| s.as_str() != token && seen.insert(s.as_str()))
                .cloned()
                .collect()
        })
        .unwrap_or_default()
}

/// Every table the extractors need.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub pos: PosTagger,
    pub gazetteer: Gazetteer,
    pub sentiment: SentimentLexicon,
    pub thesaurus: Thesaurus,
    pub keywords: BTreeSet<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::from_sources(
            DEFAULT_POS,
            DEFAULT_GAZETTEER,
            DEFAULT_SENTIMENT,
            DEFAULT_THESAURUS,
            DEFAULT_KEYWORDS,
        )
        .expect("bundled lexicons are valid")
    }
}

impl Lexicons {
    pub fn from_sources(
        pos: &str,
        gazetteer: &str,
        sentiment: &str,
        thesaurus: &str,
        keywords: &str,
    ) -> Result<Self> {
        Ok(Lexicons {
            pos: PosTagger::from_table(pos)?,
            gazetteer: Gazetteer::from_table(gazetteer)?,
            sentiment: SentimentLexicon::from_table(sentiment)?,
            thesaurus: Thesaurus::from_table(thesaurus)?,
            keywords: parse_table(keywords, "keywords")?
                .into_iter()
                .map(|(k, _)| k.to_lowercase())
                .collect(),
        })
    }

    /// Loads the five tables named in [`LEXICON_FILES`] from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        };
        Self::from_sources(
            &read(LEXICON_FILES[0])?,
            &read(LEXICON_FILES[1])?,
            &read(LEXICON_FILES[2])?,
            &read(LEXICON_FILES[3])?,
            &read(LEXICON_FILES[4])?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub source: UtteranceKey,
    pub pos_tags: Vec<(String, PosTag)>,
    pub entities: Vec<Entity>,
    pub word_freq: BTreeMap<String, usize>,
    pub verb_freq: BTreeMap<String, usize>,
    pub keyword_freq: BTreeMap<String, usize>,
    pub synonyms: BTreeMap<String, Vec<String>>,
    pub sentiment: SentimentResult,
    pub tfidf: SparseVector,
}

/// Terms fed to TF-IDF for one utterance: the lemmas of its kept tokens.
pub fn document_terms(clean: &CleanUtterance) -> Vec<String> {
    clean.kept_lemmas()
}

/// Runs every extractor over the kept tokens of `clean`. Token-level
/// extractors see surface tokens; verb frequency and TF-IDF use lemmas.
pub fn extract_features(clean: &CleanUtterance, vocab: &Vocabulary, lexicons: &Lexicons) -> FeatureBundle {
    let tokens = clean.kept_tokens();
    let lemmas = clean.kept_lemmas();
    let pos_tags = pos_tag(&tokens, &lexicons.pos);
    let verbs: Vec<&str> = pos_tags
        .iter()
        .zip(&lemmas)
        .filter(|((_, tag), _)| *tag == PosTag::Verb)
        .map(|(_, lemma)| lemma.as_str())
        .collect();
    let word_freq = count_tokens(&tokens);
    let keyword_freq = word_freq
        .iter()
        .filter(|(w, _)| lexicons.keywords.contains(*w))
        .map(|(w, c)| (w.clone(), *c))
        .collect();
    let synonyms = word_freq
        .keys()
        .filter_map(|w| {
            let list = synonyms_lookup(w, &lexicons.thesaurus);
            (!list.is_empty()).then(|| (w.clone(), list))
        })
        .collect();
    FeatureBundle {
        source: clean.source.clone(),
        entities: ner_extract(&tokens, &lexicons.gazetteer),
        verb_freq: count_tokens(&verbs),
        keyword_freq,
        synonyms,
        sentiment: sentiment(&tokens, &lexicons.sentiment),
        tfidf: tfidf_transform(&lemmas, vocab),
        word_freq,
        pos_tags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::{curate_text, CurationConfig};

    fn tokens(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn word_frequency_cases() {
        assert_eq!(
            word_frequency(&tokens(&["a", "b", "a"]), 2),
            vec![("a".into(), 2), ("b".into(), 1)]
        );
        assert!(word_frequency::<String>(&[], 3).is_empty());
        assert_eq!(
            word_frequency(&tokens(&["y", "x"]), 2),
            vec![("x".into(), 1), ("y".into(), 1)]
        );
        assert_eq!(word_frequency(&tokens(&["a", "b"]), 0), vec![]);
        assert_eq!(word_frequency(&tokens(&["a"]), 5).len(), 1);
    }

    #[test]
    fn synonyms_cases() {
        let mut t = Thesaurus::default();
        t.insert("fix", &["repair", "resolve", "fix", "repair"]);
        assert!(synonyms_lookup("absent", &t).is_empty());
        assert_eq!(synonyms_lookup("fix", &t), tokens(&["repair", "resolve"]));
    }

    #[test]
    fn bundled_lexicons_load() {
        let lex = Lexicons::default();
        assert!(lex.gazetteer.entity_types().contains(&"PRODUCT".to_string()));
        assert!(lex.keywords.contains("password"));
    }

    #[test]
    fn empty_utterance_bundle() {
        let clean = curate_text(UtteranceKey::new("c", "u"), "", &CurationConfig::default());
        let vocab = tfidf_fit(&[tokens(&["a"])]).unwrap();
        let b = extract_features(&clean, &vocab, &Lexicons::default());
        assert!(b.word_freq.is_empty() && b.verb_freq.is_empty() && b.entities.is_empty());
        assert_eq!(b.sentiment.polarity, Polarity::Neutral);
        assert_eq!(b.tfidf.norm(), 0.0);
        assert_eq!(b.tfidf.dim, 1);
    }

    #[test]
    fn verb_keys_are_verb_lemmas() {
        let config = CurationConfig::default();
        let clean = curate_text(
            UtteranceKey::new("c", "u"),
            "I tried rebooting and updated the drivers twice",
            &config,
        );
        let vocab = tfidf_fit(&[document_terms(&clean)]).unwrap();
        let b = extract_features(&clean, &vocab, &Lexicons::default());
        let lemmas: BTreeSet<String> = clean.kept_lemmas().into_iter().collect();
        assert!(!b.verb_freq.is_empty());
        for verb in b.verb_freq.keys() {
            assert!(lemmas.contains(verb));
        }
        assert_eq!(b.word_freq.values().sum::<usize>(), clean.kept_tokens().len());
        assert!((b.tfidf.norm() - 1.0).abs() < 1e-12);
    }
}
