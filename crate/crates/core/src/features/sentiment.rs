use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::parse_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn from_score(score: i64) -> Polarity {
        match score.signum() {
            1 => Polarity::Positive,
            -1 => Polarity::Negative,
            _ => Polarity::Neutral,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub positive_hits: usize,
    pub negative_hits: usize,
    pub score: i64,
    pub polarity: Polarity,
}

/// Disjoint positive and negative word sets.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl SentimentLexicon {
    pub fn new(positive: BTreeSet<String>, negative: BTreeSet<String>) -> Result<Self> {
        if let Some(word) = positive.intersection(&negative).next() {
            return Err(Error::Config(format!(
                "sentiment lexicon: {word:?} is both positive and negative"
            )));
        }
        Ok(SentimentLexicon { positive, negative })
    }

    /// Reads `word<TAB>positive|negative` rows.
    pub fn from_table(source: &str) -> Result<Self> {
        let mut positive = BTreeSet::new();
        let mut negative = BTreeSet::new();
        for (word, class) in parse_pairs(source, "sentiment lexicon")? {
            let word = word.to_lowercase();
            match class.to_ascii_lowercase().as_str() {
                "positive" | "pos" | "+" => positive.insert(word),
                "negative" | "neg" | "-" => negative.insert(word),
                other => {
                    return Err(Error::Config(format!(
                        "sentiment lexicon: unknown class {other:?} for {word:?}"
                    )))
                }
            };
        }
        Self::new(positive, negative)
    }

    /// The same lexicon with the two sets exchanged.
    pub fn swapped(&self) -> Self {
        SentimentLexicon {
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }
}

pub fn sentiment(tokens: &[String], lexicon: &SentimentLexicon) -> SentimentResult {
    let positive_hits = tokens.iter().filter(|t| lexicon.positive.contains(*t)).count();
    let negative_hits = tokens.iter().filter(|t| lexicon.negative.contains(*t)).count();
    let score = positive_hits as i64 - negative_hits as i64;
    SentimentResult {
        positive_hits,
        negative_hits,
        score,
        polarity: Polarity::from_score(score),
    }
}
