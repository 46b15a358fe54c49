//! Generator for a linearly separable intent corpus.
//!
//! Each consolidated category owns a disjoint set of invented keywords and
//! every utterance is built from keywords of exactly one category. Feedback
//! utterances also carry sentiment words matching their positive or
//! negative feedback tag, so all three polarities occur.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{Actor, Conversation, Utterance};
use crate::taxonomy::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub conversations: usize,
    pub turns: usize,
    pub keywords_per_category: usize,
    pub min_keywords_per_utterance: usize,
    pub max_keywords_per_utterance: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            conversations: 100,
            turns: 5,
            keywords_per_category: 20,
            min_keywords_per_utterance: 12,
            max_keywords_per_utterance: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub conversations: Vec<Conversation>,
    pub keywords: BTreeMap<Category, Vec<String>>,
}

const CATEGORIES: [Category; 5] = [
    Category::Question,
    Category::Answer,
    Category::Feedback,
    Category::FurtherInformation,
    Category::NoInformation,
];
const CONSONANTS: &[u8] = b"bdfklmnprtvz";
const VOWELS: &[u8] = b"aeiou";
const ENDINGS: &[u8] = b"kmnt";
const POSITIVE_WORDS: [&str; 3] = ["thanks", "great", "helpful"];
const NEGATIVE_WORDS: [&str; 3] = ["unfortunately", "broken", "useless"];

/// Three consonant-vowel syllables and a closing consonant. The endings are
/// chosen so that no suffix rule of the default lemmatizer applies.
fn invent_word(rng: &mut impl Rng) -> String {
    let mut w = String::with_capacity(7);
    for _ in 0..3 {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    w.push(*ENDINGS.choose(rng).unwrap() as char);
    w
}

fn tags_for(category: Category) -> &'static [&'static str] {
    match category {
        Category::Question => &["OQ", "RQ", "CQ", "FQ"],
        Category::Answer => &["PA"],
        Category::Feedback => &["PF", "NF"],
        Category::FurtherInformation => &["IR", "FD"],
        Category::NoInformation => &["GG", "JK", "O"],
    }
}

pub fn synthetic_corpus(spec: &SyntheticSpec, rng: &mut impl Rng) -> SyntheticCorpus {
    let mut used = BTreeSet::new();
    let mut keywords = BTreeMap::new();
    for category in CATEGORIES {
        let mut words = Vec::with_capacity(spec.keywords_per_category);
        while words.len() < spec.keywords_per_category {
            let w = invent_word(rng);
            if used.insert(w.clone()) {
                words.push(w);
            }
        }
        keywords.insert(category, words);
    }

    let turns = spec.turns.max(2);
    let mut conversations = Vec::with_capacity(spec.conversations);
    for c in 0..spec.conversations {
        let conversation_id = format!("syn{c:04}");
        // first turn asks, one later turn answers, the rest are random
        let mut plan: Vec<Category> = (0..turns).map(|_| *CATEGORIES.choose(rng).unwrap()).collect();
        plan[0] = Category::Question;
        plan[rng.random_range(1..turns)] = Category::Answer;

        let utterances = plan
            .iter()
            .enumerate()
            .map(|(position, &category)| {
                let tag = *tags_for(category).choose(rng).unwrap();
                let actor = match category {
                    Category::Question => Actor::User,
                    Category::Answer => Actor::Agent,
                    _ if position % 2 == 0 => Actor::User,
                    _ => Actor::Agent,
                };
                let count =
                    rng.random_range(spec.min_keywords_per_utterance..=spec.max_keywords_per_utterance);
                let mut words: Vec<String> = keywords[&category]
                    .choose_multiple(rng, count.min(spec.keywords_per_category))
                    .cloned()
                    .collect();
                match tag {
                    "PF" => words.extend(POSITIVE_WORDS.iter().map(|w| w.to_string())),
                    "NF" => words.extend(NEGATIVE_WORDS.iter().map(|w| w.to_string())),
                    _ => {}
                }
                words.shuffle(rng);
                let mut text = words.join(" ");
                if let Some(first) = text.get_mut(0..1) {
                    first.make_ascii_uppercase();
                }
                text.push(if category == Category::Question { '?' } else { '.' });
                Utterance {
                    utterance_id: (position + 1).to_string(),
                    position,
                    actor,
                    actor_id: match actor {
                        Actor::User => format!("user-{c}"),
                        Actor::Agent => format!("agent-{c}"),
                    },
                    text,
                    raw_tags: vec![tag.to_string()],
                    is_answer: category == Category::Answer,
                    vote: 0,
                }
            })
            .collect();
        conversations.push(Conversation::new(
            conversation_id,
            format!("synthetic thread {c}"),
            "synthetic",
            "2020-01-01T00:00:00",
            utterances,
        ));
    }
    SyntheticCorpus {
        conversations,
        keywords,
    }
}
