use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::parse_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Det,
    Pron,
    Num,
    Other,
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "NOUN" => PosTag::Noun,
            "VERB" => PosTag::Verb,
            "ADJ" => PosTag::Adj,
            "ADV" => PosTag::Adv,
            "DET" => PosTag::Det,
            "PRON" => PosTag::Pron,
            "NUM" => PosTag::Num,
            "OTHER" => PosTag::Other,
            _ => return Err(Error::Config(format!("unknown POS tag {s:?}"))),
        })
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Det => "DET",
            PosTag::Pron => "PRON",
            PosTag::Num => "NUM",
            PosTag::Other => "OTHER",
        };
        f.write_str(name)
    }
}

/// Lexicon lookup with ordered suffix heuristics for unknown words.
#[derive(Debug, Clone, Default)]
pub struct PosTagger {
    lexicon: BTreeMap<String, PosTag>,
    suffix_rules: Vec<(String, PosTag)>,
}

impl PosTagger {
    pub fn new(lexicon: BTreeMap<String, PosTag>, suffix_rules: Vec<(String, PosTag)>) -> Self {
        PosTagger {
            lexicon,
            suffix_rules,
        }
    }

    /// Reads `word<TAB>TAG` rows; rows whose key starts with `-` are suffix
    /// rules, kept in file order.
    pub fn from_table(source: &str) -> Result<Self> {
        let mut tagger = PosTagger::default();
        for (key, tag) in parse_pairs(source, "pos lexicon")? {
            let tag: PosTag = tag.parse()?;
            match key.strip_prefix('-') {
                Some(suffix) if !suffix.is_empty() => tagger.suffix_rules.push((suffix.to_lowercase(), tag)),
                Some(_) => return Err(Error::Config("pos lexicon: empty suffix rule".into())),
                None => {
                    tagger.lexicon.insert(key.to_lowercase(), tag);
                }
            }
        }
        Ok(tagger)
    }

    pub fn tag(&self, token: &str) -> PosTag {
        if let Some(tag) = self.lexicon.get(token) {
            return *tag;
        }
        if token.chars().all(|c| c.is_numeric()) {
            return PosTag::Num;
        }
        let length = token.chars().count();
        self.suffix_rules
            .iter()
            .find(|(suffix, _)| token.ends_with(suffix.as_str()) && length >= suffix.chars().count() + 2)
            .map(|(_, tag)| *tag)
            .unwrap_or(PosTag::Noun)
    }
}

pub fn pos_tag(tokens: &[String], tagger: &PosTagger) -> Vec<(String, PosTag)> {
    tokens.iter().map(|t| (t.clone(), tagger.tag(t))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_input() {
        assert!(pos_tag(&[], &PosTagger::default()).is_empty());
    }

    #[test]
    fn lexicon_first() {
        let tagger = PosTagger::from_table("the\tDET\n-ing\tVERB\n").unwrap();
        assert_eq!(
            pos_tag(&tokens(&["the"]), &tagger),
            vec![("the".into(), PosTag::Det)]
        );
    }

    #[test]
    fn suffix_heuristic_then_noun() {
        let tagger = PosTagger::from_table("-ing\tVERB\n-ly\tADV\n").unwrap();
        assert_eq!(tagger.tag("rebooting"), PosTag::Verb);
        assert_eq!(tagger.tag("quickly"), PosTag::Adv);
        assert_eq!(tagger.tag("printer"), PosTag::Noun);
        assert_eq!(tagger.tag("2016"), PosTag::Num);
        // too short to carry the suffix
        assert_eq!(tagger.tag("ing"), PosTag::Noun);
    }

    #[test]
    fn rejects_unknown_tags() {
        assert!(PosTagger::from_table("x\tFOO\n").is_err());
    }
}
