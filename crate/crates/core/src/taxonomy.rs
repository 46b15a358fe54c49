//! Raw intent tags, their consolidation into five categories, and label
//! distribution statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStats;
use crate::error::{Error, Result};

const DEFAULT_MAP: &str = include_str!("../data/consolidation.json");

/// Consolidated intent category. Declaration order is also the priority
/// order used when a single label has to be chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Question,
    Answer,
    Feedback,
    FurtherInformation,
    NoInformation,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Question,
        Category::Answer,
        Category::Feedback,
        Category::FurtherInformation,
        Category::NoInformation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Question => "Question",
            Category::Answer => "Answer",
            Category::Feedback => "Feedback",
            Category::FurtherInformation => "FurtherInformation",
            Category::NoInformation => "NoInformation",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationMap {
    pub version: String,
    pub mapping: BTreeMap<String, Category>,
    /// Tags marking positive feedback, used by the feedback sentiment check.
    #[serde(default)]
    pub feedback_positive: Vec<String>,
    #[serde(default)]
    pub feedback_negative: Vec<String>,
}

impl Default for ConsolidationMap {
    fn default() -> Self {
        Self::from_json(DEFAULT_MAP).expect("bundled consolidation map is valid")
    }
}

impl ConsolidationMap {
    pub fn from_json(source: &str) -> Result<Self> {
        let mut map: ConsolidationMap =
            serde_json::from_str(source).map_err(|e| Error::Config(format!("consolidation map: {e}")))?;
        map.mapping = map
            .mapping
            .into_iter()
            .map(|(tag, c)| (tag.to_ascii_uppercase(), c))
            .collect();
        for tag in map
            .feedback_positive
            .iter_mut()
            .chain(map.feedback_negative.iter_mut())
        {
            *tag = tag.to_ascii_uppercase();
        }
        if let Some(tag) = map
            .feedback_positive
            .iter()
            .find(|t| map.feedback_negative.contains(t))
        {
            return Err(Error::Config(format!(
                "consolidation map: {tag} is both positive and negative feedback"
            )));
        }
        Ok(map)
    }

    /// Fails on any observed tag without an entry. Categories that no tag
    /// maps onto are returned as warnings.
    pub fn check_against(&self, stats: &CorpusStats) -> Result<Vec<String>> {
        if let Some(tag) = stats
            .tag_vocabulary
            .keys()
            .find(|t| !self.mapping.contains_key(*t))
        {
            return Err(Error::UnmappedTag(tag.clone()));
        }
        let covered: BTreeSet<Category> = self.mapping.values().copied().collect();
        Ok(Category::ALL
            .into_iter()
            .filter(|c| !covered.contains(c) && *c != Category::NoInformation)
            .map(|c| format!("no tag maps to {c}"))
            .collect())
    }
}

/// Union of the per-tag categories. Untagged utterances are NoInformation.
pub fn consolidate<S: AsRef<str>>(raw_tags: &[S], map: &ConsolidationMap) -> Result<BTreeSet<Category>> {
    if raw_tags.is_empty() {
        return Ok(BTreeSet::from([Category::NoInformation]));
    }
    raw_tags
        .iter()
        .map(|t| {
            map.mapping
                .get(t.as_ref())
                .copied()
                .ok_or_else(|| Error::UnmappedTag(t.as_ref().to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentLabeling {
    pub raw_tags: BTreeSet<String>,
    pub categories: BTreeSet<Category>,
}

impl IntentLabeling {
    pub fn new<S: AsRef<str>>(raw_tags: &[S], map: &ConsolidationMap) -> Result<Self> {
        Ok(IntentLabeling {
            raw_tags: raw_tags.iter().map(|t| t.as_ref().to_string()).collect(),
            categories: consolidate(raw_tags, map)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelMode {
    RawMultiLabel,
    ConsolidatedMultiLabel,
    ConsolidatedSingle,
}

impl LabelMode {
    pub fn is_multi_label(self) -> bool {
        !matches!(self, LabelMode::ConsolidatedSingle)
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(LabelMode::RawMultiLabel),
            "consolidated" => Ok(LabelMode::ConsolidatedMultiLabel),
            "single" => Ok(LabelMode::ConsolidatedSingle),
            _ => Err(Error::Config(format!("unknown label mode {s:?}"))),
        }
    }
}

/// Ordered label names for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub mode: LabelMode,
    pub labels: Vec<String>,
}

impl LabelSpace {
    /// Raw mode uses the sorted tag vocabulary; the consolidated modes use
    /// the five categories.
    pub fn new<'a>(mode: LabelMode, tags: impl IntoIterator<Item = &'a String>) -> Self {
        let labels = match mode {
            LabelMode::RawMultiLabel => {
                let set: BTreeSet<&String> = tags.into_iter().collect();
                set.into_iter().cloned().collect()
            }
            _ => Category::ALL.iter().map(|c| c.to_string()).collect(),
        };
        LabelSpace { mode, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Multi(Vec<f64>),
    Single(usize),
}

impl Target {
    /// Indicator vector of the true label set.
    pub fn indicator(&self, labels: usize) -> Vec<bool> {
        match self {
            Target::Multi(v) => v.iter().map(|x| *x > 0.5).collect(),
            Target::Single(k) => (0..labels).map(|i| i == *k).collect(),
        }
    }
}

/// Highest-priority category in a non-empty set.
pub fn primary_category(categories: &BTreeSet<Category>) -> Category {
    categories
        .iter()
        .next()
        .copied()
        .unwrap_or(Category::NoInformation)
}

pub fn target_vector(labeling: &IntentLabeling, space: &LabelSpace) -> Target {
    match space.mode {
        LabelMode::RawMultiLabel => Target::Multi(
            space
                .labels
                .iter()
                .map(|l| if labeling.raw_tags.contains(l) { 1.0 } else { 0.0 })
                .collect(),
        ),
        LabelMode::ConsolidatedMultiLabel => Target::Multi(
            Category::ALL
                .iter()
                .map(|c| if labeling.categories.contains(c) { 1.0 } else { 0.0 })
                .collect(),
        ),
        LabelMode::ConsolidatedSingle => Target::Single(primary_category(&labeling.categories).index()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub utterances: usize,
    pub tag_counts: BTreeMap<String, usize>,
    pub category_counts: BTreeMap<Category, usize>,
    /// Symmetric; the diagonal equals `tag_counts`.
    pub co_occurrence: BTreeMap<String, BTreeMap<String, usize>>,
}

impl LabelDistribution {
    pub fn co_occurrence(&self, a: &str, b: &str) -> usize {
        self.co_occurrence
            .get(a)
            .and_then(|row| row.get(b))
            .copied()
            .unwrap_or(0)
    }

    pub fn merge(mut self, other: LabelDistribution) -> Self {
        self.utterances += other.utterances;
        for (t, c) in other.tag_counts {
            *self.tag_counts.entry(t).or_default() += c;
        }
        for (cat, c) in other.category_counts {
            *self.category_counts.entry(cat).or_default() += c;
        }
        for (a, row) in other.co_occurrence {
            let target = self.co_occurrence.entry(a).or_default();
            for (b, c) in row {
                *target.entry(b).or_default() += c;
            }
        }
        self
    }
}

pub fn label_distribution<'a>(labelings: impl IntoIterator<Item = &'a IntentLabeling>) -> LabelDistribution {
    let mut dist = LabelDistribution {
        category_counts: Category::ALL.iter().map(|c| (*c, 0)).collect(),
        ..LabelDistribution::default()
    };
    for labeling in labelings {
        dist.utterances += 1;
        for tag in &labeling.raw_tags {
            *dist.tag_counts.entry(tag.clone()).or_default() += 1;
            let row = dist.co_occurrence.entry(tag.clone()).or_default();
            for other in &labeling.raw_tags {
                *row.entry(other.clone()).or_default() += 1;
            }
        }
        for c in &labeling.categories {
            *dist.category_counts.entry(*c).or_default() += 1;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, Category)]) -> ConsolidationMap {
        ConsolidationMap {
            version: "test".into(),
            mapping: pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
            feedback_positive: vec![],
            feedback_negative: vec![],
        }
    }

    #[test]
    fn consolidate_cases() {
        let m = map(&[
            ("OQ", Category::Question),
            ("PA", Category::Answer),
            ("FD", Category::FurtherInformation),
        ]);
        assert_eq!(
            consolidate::<&str>(&[], &m).unwrap(),
            BTreeSet::from([Category::NoInformation])
        );
        assert_eq!(
            consolidate(&["OQ"], &m).unwrap(),
            BTreeSet::from([Category::Question])
        );
        assert_eq!(
            consolidate(&["PA", "FD"], &m).unwrap(),
            BTreeSet::from([Category::Answer, Category::FurtherInformation])
        );
        match consolidate(&["ZZ"], &m) {
            Err(Error::UnmappedTag(t)) => assert_eq!(t, "ZZ"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_map_covers_msdialog_tags() {
        let m = ConsolidationMap::default();
        for tag in [
            "OQ", "RQ", "CQ", "FQ", "PA", "PF", "NF", "IR", "FD", "GG", "JK", "O",
        ] {
            assert!(m.mapping.contains_key(tag), "{tag}");
        }
        assert_eq!(m.feedback_positive, vec!["PF"]);
        assert_eq!(m.feedback_negative, vec!["NF"]);
    }

    #[test]
    fn distribution_counts_pairs() {
        let m = map(&[("A", Category::Question), ("B", Category::Answer)]);
        let l = IntentLabeling::new(&["A", "B"], &m).unwrap();
        let d = label_distribution([&l]);
        assert_eq!(d.co_occurrence("A", "B"), 1);
        assert_eq!(d.co_occurrence("B", "A"), 1);
        assert_eq!(d.tag_counts["A"], 1);
        assert_eq!(d.tag_counts["B"], 1);
        assert_eq!(d.co_occurrence("A", "A"), 1);
    }

    #[test]
    fn empty_distribution() {
        let d = label_distribution([]);
        assert_eq!(d.utterances, 0);
        assert!(d.tag_counts.is_empty());
        assert!(d.category_counts.values().all(|c| *c == 0));
    }

    #[test]
    fn single_mode_priority() {
        let space = LabelSpace::new(LabelMode::ConsolidatedSingle, []);
        let l = IntentLabeling {
            raw_tags: BTreeSet::new(),
            categories: BTreeSet::from([Category::Question]),
        };
        assert_eq!(
            target_vector(&l, &space),
            Target::Single(Category::Question.index())
        );
        let l = IntentLabeling {
            raw_tags: BTreeSet::new(),
            categories: BTreeSet::from([Category::Feedback, Category::Answer]),
        };
        assert_eq!(
            target_vector(&l, &space),
            Target::Single(Category::Answer.index())
        );
    }

    #[test]
    fn consolidated_multi_label_vector() {
        let space = LabelSpace::new(LabelMode::ConsolidatedMultiLabel, []);
        let l = IntentLabeling {
            raw_tags: BTreeSet::new(),
            categories: BTreeSet::from([Category::Question, Category::Answer]),
        };
        match target_vector(&l, &space) {
            Target::Multi(v) => {
                assert_eq!(v.len(), 5);
                assert_eq!(v.iter().sum::<f64>(), 2.0);
            }
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn raw_mode_uses_sorted_tags() {
        let tags = vec!["PA".to_string(), "OQ".to_string(), "PA".to_string()];
        let space = LabelSpace::new(LabelMode::RawMultiLabel, &tags);
        assert_eq!(space.labels, vec!["OQ", "PA"]);
        let m = map(&[("OQ", Category::Question), ("PA", Category::Answer)]);
        let l = IntentLabeling::new(&["PA"], &m).unwrap();
        assert_eq!(target_vector(&l, &space), Target::Multi(vec![0.0, 1.0]));
    }

    #[test]
    fn feedback_overlap_rejected() {
        let json =
            r#"{"version": "x", "mapping": {}, "feedback_positive": ["PF"], "feedback_negative": ["pf"]}"#;
        assert!(ConsolidationMap::from_json(json).is_err());
    }
}
