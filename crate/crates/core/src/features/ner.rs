use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curation::tokenize;
use crate::error::{Error, Result};
use crate::util::parse_pairs;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Token index of the first token.
    pub span_start: usize,
    /// One past the last token.
    pub span_end: usize,
    pub entity_type: String,
    pub surface: String,
}

/// Surface form (as a token sequence) → entity type.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<Vec<String>, String>,
    longest: usize,
}

impl Gazetteer {
    pub fn insert(&mut self, surface: &str, entity_type: &str) -> Result<()> {
        let key = tokenize(&surface.to_lowercase());
        if key.is_empty() {
            return Err(Error::Config(format!(
                "gazetteer: surface {surface:?} has no tokens"
            )));
        }
        self.longest = self.longest.max(key.len());
        self.entries.insert(key, entity_type.to_string());
        Ok(())
    }

    pub fn from_table(source: &str) -> Result<Self> {
        let mut gazetteer = Gazetteer::default();
        for (surface, entity_type) in parse_pairs(source, "gazetteer")? {
            gazetteer.insert(&surface, &entity_type)?;
        }
        Ok(gazetteer)
    }

    /// Distinct entity types, sorted.
    pub fn entity_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self.entries.values().cloned().collect();
        types.sort();
        types.dedup();
        types
    }
}

/// Greedy longest match, scanning left to right. Matches never overlap.
pub fn ner_extract(tokens: &[String], gazetteer: &Gazetteer) -> Vec<Entity> {
    let mut entities = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let max_len = gazetteer.longest.min(tokens.len() - start);
        let hit = (1..=max_len).rev().find_map(|len| {
            gazetteer
                .entries
                .get(&tokens[start..start + len])
                .map(|ty| (len, ty))
        });
        match hit {
            Some((len, entity_type)) => {
                entities.push(Entity {
                    span_start: start,
                    span_end: start + len,
                    entity_type: entity_type.clone(),
                    surface: tokens[start..start + len].join(" "),
                });
                start += len;
            }
            None => start += 1,
        }
    }
    entities
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_hits() {
        let g = Gazetteer::from_table("skype\tPRODUCT\n").unwrap();
        assert!(ner_extract(&tokens(&["hello", "there"]), &g).is_empty());
        assert!(ner_extract(&[], &g).is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let g = Gazetteer::from_table("windows 10\tPRODUCT\nwindows\tPRODUCT\n").unwrap();
        let found = ner_extract(&tokens(&["windows", "10", "crashed"]), &g);
        assert_eq!(
            found,
            vec![Entity {
                span_start: 0,
                span_end: 2,
                entity_type: "PRODUCT".into(),
                surface: "windows 10".into(),
            }]
        );
    }

    #[test]
    fn repeated_entities() {
        let g = Gazetteer::from_table("skype\tPRODUCT\n").unwrap();
        let found = ner_extract(&tokens(&["skype", "and", "skype"]), &g);
        assert_eq!(found.len(), 2);
        assert_eq!((found[1].span_start, found[1].span_end), (2, 3));
    }

    #[test]
    fn overlapping_candidates_do_not_overlap() {
        let g = Gazetteer::from_table("a b\tX\nb c\tY\n").unwrap();
        let found = ner_extract(&tokens(&["a", "b", "c"]), &g);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].entity_type, "X");
    }
}
