//! Text curation: regex normalisation, tokenisation, lemmatisation and
//! stopword removal.
//!
//! Token grammar: a token is a maximal run of alphanumeric characters, where
//! an apostrophe or hyphen is kept when it sits between two alphanumeric
//! characters (`won't`, `sign-in`). Everything else separates tokens.
//!
//! Normalisation patterns use the `regex` crate dialect. Replacements may
//! refer to capture groups with `$1` / `${name}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Utterance, UtteranceKey};
use crate::error::{Error, Result};
use crate::util::{parse_pairs, parse_table};

const DEFAULT_CONFIG: &str = include_str!("../data/curation.json");
const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_LEMMAS: &str = include_str!("../data/lemmas.tsv");

#[derive(Debug, Clone)]
pub struct NormalizationRule {
    pattern: Regex,
    replacement: String,
}

impl NormalizationRule {
    pub fn new(pattern: &str, replacement: &str) -> Result<Self> {
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("invalid normalization pattern {pattern:?}: {e}")))?;
        Ok(NormalizationRule {
            pattern,
            replacement: replacement.to_string(),
        })
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
    /// Minimum number of characters left after removing the suffix.
    pub min_stem_length: usize,
}

/// On-disk form of [`CurationConfig`]. Table paths are resolved relative to
/// the directory holding the JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurationConfigFile {
    normalization_patterns: Vec<(String, String)>,
    stopwords: String,
    lemma_exceptions: String,
    suffix_rules: Vec<(String, String, usize)>,
}

#[derive(Debug, Clone)]
pub struct CurationConfig {
    /// Applied in declared order.
    pub normalization_patterns: Vec<NormalizationRule>,
    pub stopword_list: BTreeSet<String>,
    pub lemma_exceptions: BTreeMap<String, String>,
    /// The first matching rule wins.
    pub suffix_rules: Vec<SuffixRule>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self::from_sources(DEFAULT_CONFIG, DEFAULT_STOPWORDS, DEFAULT_LEMMAS)
            .expect("bundled curation config is valid")
    }
}

impl CurationConfig {
    /// Loads a JSON config and the stopword/lemma tables it references.
    pub fn load(path: &Path) -> Result<Self> {
        let source =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: CurationConfigFile =
            serde_json::from_str(&source).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let read = |name: &str| {
            let p = base.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        };
        let stopwords = read(&file.stopwords)?;
        let lemmas = read(&file.lemma_exceptions)?;
        Self::build(file, &stopwords, &lemmas)
    }

    /// Builds a config from in-memory JSON and table contents.
    pub fn from_sources(config_json: &str, stopwords: &str, lemmas: &str) -> Result<Self> {
        let file: CurationConfigFile =
            serde_json::from_str(config_json).map_err(|e| Error::Config(format!("curation config: {e}")))?;
        Self::build(file, stopwords, lemmas)
    }

    fn build(file: CurationConfigFile, stopwords: &str, lemmas: &str) -> Result<Self> {
        let normalization_patterns = file
            .normalization_patterns
            .iter()
            .map(|(p, r)| NormalizationRule::new(p, r))
            .collect::<Result<Vec<_>>>()?;
        let stopword_list = parse_table(stopwords, "stopwords")?
            .into_iter()
            .map(|(w, _)| w.to_lowercase())
            .collect();
        let mut lemma_exceptions = BTreeMap::new();
        for (word, lemma) in parse_pairs(lemmas, "lemma exceptions")? {
            lemma_exceptions.insert(word.to_lowercase(), lemma.to_lowercase());
        }
        let suffix_rules = file
            .suffix_rules
            .into_iter()
            .map(|(suffix, replacement, min_stem_length)| {
                if suffix.is_empty() {
                    return Err(Error::Config("suffix rule with empty suffix".into()));
                }
                Ok(SuffixRule {
                    suffix,
                    replacement,
                    min_stem_length,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurationConfig {
            normalization_patterns,
            stopword_list,
            lemma_exceptions,
            suffix_rules,
        })
    }
}

fn fold_case(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase().nfc().collect()
}

/// Applies `rules` left to right, each globally, to the NFC-normalised,
/// lowercased text.
pub fn normalize(text: &str, rules: &[NormalizationRule]) -> String {
    let mut out = fold_case(text);
    for rule in rules {
        if let std::borrow::Cow::Owned(replaced) = rule.pattern.replace_all(&out, rule.replacement.as_str()) {
            out = replaced;
        }
    }
    fold_case(&out)
}

fn joins_word(c: char) -> bool {
    c == '\'' || c == '-'
}

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins =
            joins_word(c) && !current.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits `tokens` into the kept tokens and the removed `(position, token)`
/// pairs. Membership is an exact string match.
pub fn remove_stopwords(
    tokens: &[String],
    stopwords: &BTreeSet<String>,
) -> (Vec<String>, Vec<(usize, String)>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if stopwords.contains(t) {
            removed.push((i, t.clone()));
        } else {
            kept.push(t.clone());
        }
    }
    (kept, removed)
}

pub fn lemmatize(token: &str, config: &CurationConfig) -> String {
    if let Some(lemma) = config.lemma_exceptions.get(token) {
        if !lemma.is_empty() {
            return lemma.clone();
        }
    }
    let length = token.chars().count();
    for rule in &config.suffix_rules {
        let Some(stem) = token.strip_suffix(rule.suffix.as_str()) else {
            continue;
        };
        if length - rule.suffix.chars().count() < rule.min_stem_length {
            continue;
        }
        let lemma = format!("{stem}{}", rule.replacement);
        if !lemma.is_empty() {
            return lemma;
        }
    }
    token.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanUtterance {
    pub source: UtteranceKey,
    pub normalized_text: String,
    /// All tokens, before stopword removal.
    pub tokens: Vec<String>,
    /// One lemma per entry of `tokens`.
    pub lemmas: Vec<String>,
    pub removed_stopwords: Vec<(usize, String)>,
}

impl CleanUtterance {
    fn kept<'a>(&'a self, items: &'a [String]) -> impl Iterator<Item = &'a String> + 'a {
        let mut removed = self.removed_stopwords.iter().map(|(i, _)| *i).peekable();
        items.iter().enumerate().filter_map(move |(i, item)| {
            if removed.peek() == Some(&i) {
                removed.next();
                None
            } else {
                Some(item)
            }
        })
    }

    /// Tokens surviving stopword removal.
    pub fn kept_tokens(&self) -> Vec<String> {
        self.kept(&self.tokens).cloned().collect()
    }

    /// Lemmas of the tokens surviving stopword removal.
    pub fn kept_lemmas(&self) -> Vec<String> {
        self.kept(&self.lemmas).cloned().collect()
    }
}

pub fn curate_text(source: UtteranceKey, text: &str, config: &CurationConfig) -> CleanUtterance {
    let normalized_text = normalize(text, &config.normalization_patterns);
    let tokens = tokenize(&normalized_text);
    let lemmas = tokens.iter().map(|t| lemmatize(t, config)).collect();
    let (_, removed_stopwords) = remove_stopwords(&tokens, &config.stopword_list);
    CleanUtterance {
        source,
        normalized_text,
        tokens,
        lemmas,
        removed_stopwords,
    }
}

pub fn curate_utterance(
    conversation_id: &str,
    utterance: &Utterance,
    config: &CurationConfig,
) -> CleanUtterance {
    curate_text(
        UtteranceKey::new(conversation_id, &utterance.utterance_id),
        &utterance.text,
        config,
    )
}
