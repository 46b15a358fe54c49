//! Conversation-level train/validation/test partition.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::named_rng;

/// Size of one held-out partition: an absolute conversation count or a
/// fraction of the conversations still unassigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSize {
    Count(usize),
    Fraction(f64),
}

impl SplitSize {
    fn resolve(self, available: usize) -> usize {
        match self {
            SplitSize::Count(n) => n.min(available),
            SplitSize::Fraction(f) => ((available as f64 * f).round() as usize).min(available),
        }
    }

    fn validate(self, what: &str) -> Result<()> {
        match self {
            SplitSize::Fraction(f) if !(0.0..1.0).contains(&f) => Err(Error::Config(format!(
                "{what} fraction must lie in [0, 1), got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Taken first, from the whole corpus.
    pub test: SplitSize,
    /// Taken from what remains after the test partition.
    pub validation: SplitSize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test: SplitSize::Count(1000),
            validation: SplitSize::Fraction(0.1),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Conversation ids of each partition, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl Split {
    pub fn partition_of(&self, conversation_id: &str) -> Option<Partition> {
        if self.train.contains(conversation_id) {
            Some(Partition::Train)
        } else if self.validation.contains(conversation_id) {
            Some(Partition::Validation)
        } else if self.test.contains(conversation_id) {
            Some(Partition::Test)
        } else {
            None
        }
    }
}

/// Shuffles the ids with a generator seeded from `spec.seed`, then cuts off
/// the test partition, then validation; the rest is training data. The
/// result does not depend on the order of `ids`.
pub fn split_conversations<S: AsRef<str>>(ids: &[S], spec: &SplitSpec) -> Result<Split> {
    spec.test.validate("test")?;
    spec.validation.validate("validation")?;
    let unique: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
    if unique.len() != ids.len() {
        return Err(Error::Data("duplicate conversation id in split input".into()));
    }
    let mut order: Vec<&str> = unique.into_iter().collect();
    order.shuffle(&mut named_rng(spec.seed, "split"));

    let test_len = spec.test.resolve(order.len());
    let valid_len = spec.validation.resolve(order.len() - test_len);
    let collect = |part: &[&str]| part.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let split = Split {
        spec: *spec,
        test: collect(&order[..test_len]),
        validation: collect(&order[test_len..test_len + valid_len]),
        train: collect(&order[test_len + valid_len..]),
    };
    if split.train.is_empty() {
        return Err(Error::Config(format!(
            "empty split: train ({} conversations, {} test, {} validation)",
            order.len(),
            test_len,
            valid_len
        )));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i:03}")).collect()
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let spec = SplitSpec {
            test: SplitSize::Count(15),
            validation: SplitSize::Count(15),
            seed: 1,
        };
        let s = split_conversations(&ids(100), &spec).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
        assert!(s.train.is_disjoint(&s.test) && s.train.is_disjoint(&s.validation));
        assert!(s.validation.is_disjoint(&s.test));
    }

    #[test]
    fn order_independent_and_seeded() {
        let spec = SplitSpec {
            test: SplitSize::Fraction(0.2),
            validation: SplitSize::Fraction(0.1),
            seed: 9,
        };
        let mut reversed = ids(50);
        reversed.reverse();
        let a = split_conversations(&ids(50), &spec).unwrap();
        assert_eq!(a, split_conversations(&reversed, &spec).unwrap());
        let b = split_conversations(&ids(50), &SplitSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.test, b.test);
        assert_eq!(a.test.len(), 10);
        assert_eq!(a.validation.len(), 4);
    }

    #[test]
    fn default_on_small_corpus_is_an_error() {
        assert!(split_conversations(&ids(10), &SplitSpec::default())
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn bad_fraction_is_a_config_error() {
        let spec = SplitSpec {
            test: SplitSize::Fraction(1.5),
            ..SplitSpec::default()
        };
        assert!(split_conversations(&ids(10), &spec).unwrap_err().is_config());
    }
}
