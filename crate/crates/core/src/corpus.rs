//! Conversation corpora: ingestion through a configurable field map,
//! validation against the selection rules, and corpus statistics.
//!
//! The on-disk layout is a JSON object keyed by conversation id. Each entry
//! holds conversation metadata plus an array of utterances. Where each
//! logical field lives inside an entry is described by [`FieldMapConfig`],
//! so exports with different key names can be read without code changes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Actor {
    User,
    Agent,
}

impl Actor {
    pub fn parse(raw: &str) -> Option<Actor> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "user" => Some(Actor::User),
            "agent" => Some(Actor::Agent),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Actor::User => "User",
            Actor::Agent => "Agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    /// Turn order, contiguous from 0 within a conversation.
    pub position: usize,
    pub actor: Actor,
    /// Identity of the participant. Falls back to the actor type when the
    /// source carries no participant identifier.
    pub actor_id: String,
    /// Raw text, preserved byte-exact.
    pub text: String,
    pub raw_tags: Vec<String>,
    pub is_answer: bool,
    pub vote: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub title: String,
    pub category: String,
    pub timestamp: String,
    pub utterances: Vec<Utterance>,
    pub participant_count: usize,
}

impl Conversation {
    /// Builds a conversation, sorting utterances by position and deriving the
    /// participant count from the distinct actor identities.
    pub fn new(
        conversation_id: impl Into<String>,
        title: impl Into<String>,
        category: impl Into<String>,
        timestamp: impl Into<String>,
        mut utterances: Vec<Utterance>,
    ) -> Conversation {
        utterances.sort_by_key(|u| u.position);
        let participant_count = count_participants(&utterances);
        Conversation {
            conversation_id: conversation_id.into(),
            title: title.into(),
            category: category.into(),
            timestamp: timestamp.into(),
            utterances,
            participant_count,
        }
    }

    pub fn turns(&self) -> usize {
        self.utterances.len()
    }

    pub fn key(&self, utterance: &Utterance) -> UtteranceKey {
        UtteranceKey::new(&self.conversation_id, &utterance.utterance_id)
    }
}

/// Identifies one utterance across pipeline stages.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtteranceKey {
    pub conversation_id: String,
    pub utterance_id: String,
}

impl UtteranceKey {
    pub fn new(conversation_id: impl Into<String>, utterance_id: impl Into<String>) -> Self {
        UtteranceKey {
            conversation_id: conversation_id.into(),
            utterance_id: utterance_id.into(),
        }
    }
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.conversation_id, self.utterance_id)
    }
}

fn count_participants(utterances: &[Utterance]) -> usize {
    utterances
        .iter()
        .map(|u| u.actor_id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Splits a raw tag annotation on ASCII whitespace, uppercases each code and
/// drops repeats while keeping first-seen order.
pub fn split_tags(raw: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.split_ascii_whitespace()
        .map(|t| t.to_ascii_uppercase())
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Maps logical field names onto key paths inside a corpus entry.
///
/// Conversation-level paths are resolved against the entry object and
/// utterance-level paths against each utterance object. A path is a
/// dot-separated list of keys. Optional fields may be set to `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapConfig {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
    pub utterances: String,
    /// Utterance id. When unmapped the utterance's array index is used.
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    pub actor: String,
    /// Participant identity used for the participant count.
    #[serde(default)]
    pub user: Option<String>,
    /// When unmapped, array order gives the turn order.
    #[serde(default)]
    pub position: Option<String>,
    #[serde(default)]
    pub tags: Option<String>,
    #[serde(default)]
    pub is_answer: Option<String>,
    #[serde(default)]
    pub vote: Option<String>,
}

impl Default for FieldMapConfig {
    /// Layout of the public MSDialog-Intent export.
    fn default() -> Self {
        FieldMapConfig {
            title: Some("title".into()),
            category: Some("category".into()),
            timestamp: Some("dialog_time".into()),
            utterances: "utterances".into(),
            id: Some("id".into()),
            text: "utterance".into(),
            actor: "actor_type".into(),
            user: Some("user_id".into()),
            position: Some("utterance_pos".into()),
            tags: Some("tags".into()),
            is_answer: Some("is_answer".into()),
            vote: Some("vote".into()),
        }
    }
}

impl FieldMapConfig {
    pub fn from_json(source: &str) -> Result<FieldMapConfig> {
        let map: FieldMapConfig =
            serde_json::from_str(source).map_err(|e| Error::Config(format!("field map: {e}")))?;
        for path in map.paths() {
            if path.is_empty() || path.split('.').any(str::is_empty) {
                return Err(Error::Config(format!("field map: invalid path {path:?}")));
            }
        }
        Ok(map)
    }

    fn paths(&self) -> impl Iterator<Item = &str> {
        [
            self.title.as_deref(),
            self.category.as_deref(),
            self.timestamp.as_deref(),
            Some(self.utterances.as_str()),
            self.id.as_deref(),
            Some(self.text.as_str()),
            Some(self.actor.as_str()),
            self.user.as_deref(),
            self.position.as_deref(),
            self.tags.as_deref(),
            self.is_answer.as_deref(),
            self.vote.as_deref(),
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticKind {
    /// The whole conversation was dropped.
    Skipped,
    /// The conversation was kept after a repair.
    Repaired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub conversation_id: String,
    pub kind: DiagnosticKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub entries: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl IngestDiagnostics {
    pub fn skipped(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.kind == DiagnosticKind::Skipped)
            .count()
    }
}

/// Parses a corpus document. Malformed JSON is fatal; problems confined to
/// one entry skip that entry and are reported in the diagnostics.
pub fn ingest_corpus(
    source: &[u8],
    field_map: &FieldMapConfig,
) -> Result<(Vec<Conversation>, IngestDiagnostics)> {
    let document: Value = serde_json::from_slice(source).map_err(|e| Error::Parse {
        offset: byte_offset(source, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(entries) = document else {
        return Err(Error::Parse {
            offset: 0,
            message: "top-level value is not an object".into(),
        });
    };

    let mut diagnostics = IngestDiagnostics {
        entries: entries.len(),
        diagnostics: Vec::new(),
    };
    let mut conversations = Vec::with_capacity(entries.len());
    for (id, entry) in &entries {
        let mut repairs = Vec::new();
        match read_conversation(id, entry, field_map, &mut repairs) {
            Ok(conversation) => {
                diagnostics
                    .diagnostics
                    .extend(repairs.into_iter().map(|reason| Diagnostic {
                        conversation_id: id.clone(),
                        kind: DiagnosticKind::Repaired,
                        reason,
                    }));
                conversations.push(conversation);
            }
            Err(reason) => diagnostics.diagnostics.push(Diagnostic {
                conversation_id: id.clone(),
                kind: DiagnosticKind::Skipped,
                reason,
            }),
        }
    }
    Ok((conversations, diagnostics))
}

fn byte_offset(source: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = source
        .split(|b| *b == b'\n')
        .take(line - 1)
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(source.len())
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.')
        .try_fold(value, |v, key| v.as_object()?.get(key))
        .filter(|v| !v.is_null())
}

type FieldResult<T> = std::result::Result<T, String>;

fn required<'a>(value: &'a Value, path: &str, name: &str) -> FieldResult<&'a Value> {
    lookup(value, path).ok_or_else(|| format!("missing field: {name}"))
}

fn as_text(value: &Value, name: &str) -> FieldResult<String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(format!("invalid value for {name}")),
    }
}

fn as_integer(value: &Value, name: &str) -> FieldResult<i64> {
    match value {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| format!("invalid value for {name}")),
        Value::String(s) => s.trim().parse().map_err(|_| format!("invalid value for {name}")),
        _ => Err(format!("invalid value for {name}")),
    }
}

fn as_flag(value: &Value, name: &str) -> FieldResult<bool> {
    match value {
        Value::Bool(b) => Ok(*b),
        Value::Number(_) | Value::String(_) => {
            if let Value::String(s) = value {
                match s.trim().to_ascii_lowercase().as_str() {
                    "true" => return Ok(true),
                    "false" => return Ok(false),
                    _ => {}
                }
            }
            match as_integer(value, name)? {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(format!("invalid value for {name}")),
            }
        }
        _ => Err(format!("invalid value for {name}")),
    }
}

fn optional_text(entry: &Value, path: Option<&str>, name: &str) -> FieldResult<String> {
    match path {
        None => Ok(String::new()),
        Some(p) => as_text(required(entry, p, name)?, name),
    }
}

fn read_conversation(
    id: &str,
    entry: &Value,
    map: &FieldMapConfig,
    repairs: &mut Vec<String>,
) -> FieldResult<Conversation> {
    if !entry.is_object() {
        return Err("entry is not an object".into());
    }
    let title = optional_text(entry, map.title.as_deref(), "title")?;
    let category = optional_text(entry, map.category.as_deref(), "category")?;
    let timestamp = optional_text(entry, map.timestamp.as_deref(), "timestamp")?;
    let items = required(entry, &map.utterances, "utterances")?
        .as_array()
        .ok_or("invalid value for utterances")?;
    if items.is_empty() {
        return Err("no utterances".into());
    }

    let mut utterances = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        utterances.push(read_utterance(index, item, map, repairs)?);
    }

    // Rebase positions to 0..n. A source that is already contiguous (from any
    // base) is rebased silently; gaps are reported as a repair.
    let mut source_positions: Vec<i64> = utterances.iter().map(|u| u.position as i64).collect();
    source_positions.sort_unstable();
    if source_positions.windows(2).any(|w| w[0] == w[1]) {
        return Err("duplicate position".into());
    }
    let contiguous = source_positions.windows(2).all(|w| w[1] == w[0] + 1);
    if !contiguous {
        repairs.push("positions renumbered".into());
    }
    utterances.sort_by_key(|u| u.position);
    for (rank, u) in utterances.iter_mut().enumerate() {
        u.position = rank;
    }

    let mut seen_ids = BTreeSet::new();
    for u in &utterances {
        if !seen_ids.insert(u.utterance_id.as_str()) {
            return Err(format!("duplicate utterance id: {}", u.utterance_id));
        }
    }

    Ok(Conversation::new(id, title, category, timestamp, utterances))
}

fn read_utterance(
    index: usize,
    item: &Value,
    map: &FieldMapConfig,
    repairs: &mut Vec<String>,
) -> FieldResult<Utterance> {
    if !item.is_object() {
        return Err("utterance is not an object".into());
    }
    let text = match required(item, &map.text, "text")? {
        Value::String(s) => s.clone(),
        _ => return Err("invalid value for text".into()),
    };
    let actor_raw = as_text(required(item, &map.actor, "actor")?, "actor")?;
    let actor = Actor::parse(&actor_raw).ok_or_else(|| format!("unknown actor: {actor_raw}"))?;
    let utterance_id = match &map.id {
        Some(p) => as_text(required(item, p, "id")?, "id")?,
        None => index.to_string(),
    };
    let actor_id = match &map.user {
        Some(p) => as_text(required(item, p, "user")?, "user")?,
        None => actor.as_str().to_string(),
    };
    let position = match &map.position {
        Some(p) => {
            let raw = as_integer(required(item, p, "position")?, "position")?;
            usize::try_from(raw).map_err(|_| "invalid value for position".to_string())?
        }
        None => index,
    };
    let raw_tags = match &map.tags {
        None => Vec::new(),
        Some(p) => match lookup(item, p) {
            None => return Err("missing field: tags".into()),
            Some(Value::String(s)) => {
                let tags = split_tags(s);
                if tags.len() != s.split_ascii_whitespace().count() {
                    repairs.push(format!("duplicate tags collapsed in utterance {utterance_id}"));
                }
                tags
            }
            Some(Value::Array(parts)) => {
                let joined = parts
                    .iter()
                    .map(|v| as_text(v, "tags"))
                    .collect::<FieldResult<Vec<_>>>()?
                    .join(" ");
                split_tags(&joined)
            }
            Some(_) => return Err("invalid value for tags".into()),
        },
    };
    let is_answer = match &map.is_answer {
        Some(p) => as_flag(required(item, p, "is_answer")?, "is_answer")?,
        None => false,
    };
    let vote = match &map.vote {
        Some(p) => as_integer(required(item, p, "vote")?, "vote")?,
        None => 0,
    };
    Ok(Utterance {
        utterance_id,
        position,
        actor,
        actor_id,
        text,
        raw_tags,
        is_answer,
        vote,
    })
}

fn insert_path(target: &mut Map<String, Value>, path: &str, value: Value) {
    let mut keys = path.split('.').peekable();
    let mut node = target;
    while let Some(key) = keys.next() {
        if keys.peek().is_none() {
            node.insert(key.to_string(), value);
            return;
        }
        let child = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if !child.is_object() {
            *child = Value::Object(Map::new());
        }
        node = child.as_object_mut().expect("object");
    }
}

/// Writes conversations back out in the layout described by `field_map`.
/// Ingesting the result under the same map reproduces the conversations.
pub fn to_document(conversations: &[Conversation], field_map: &FieldMapConfig) -> Value {
    let mut root = Map::new();
    for c in conversations {
        let mut entry = Map::new();
        let meta = [
            (&field_map.title, &c.title),
            (&field_map.category, &c.category),
            (&field_map.timestamp, &c.timestamp),
        ];
        for (path, value) in meta {
            if let Some(p) = path {
                insert_path(&mut entry, p, Value::String(value.clone()));
            }
        }
        let utterances = c
            .utterances
            .iter()
            .map(|u| {
                let mut obj = Map::new();
                if let Some(p) = &field_map.id {
                    insert_path(&mut obj, p, Value::String(u.utterance_id.clone()));
                }
                insert_path(&mut obj, &field_map.text, Value::String(u.text.clone()));
                insert_path(&mut obj, &field_map.actor, Value::String(u.actor.as_str().into()));
                if let Some(p) = &field_map.user {
                    insert_path(&mut obj, p, Value::String(u.actor_id.clone()));
                }
                if let Some(p) = &field_map.position {
                    insert_path(&mut obj, p, Value::from(u.position));
                }
                if let Some(p) = &field_map.tags {
                    insert_path(&mut obj, p, Value::String(u.raw_tags.join(" ")));
                }
                if let Some(p) = &field_map.is_answer {
                    insert_path(&mut obj, p, Value::Bool(u.is_answer));
                }
                if let Some(p) = &field_map.vote {
                    insert_path(&mut obj, p, Value::from(u.vote));
                }
                Value::Object(obj)
            })
            .collect();
        insert_path(&mut entry, &field_map.utterances, Value::Array(utterances));
        root.insert(c.conversation_id.clone(), Value::Object(entry));
    }
    Value::Object(root)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationRules {
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_participants: usize,
    pub max_participants: usize,
    pub require_answer: bool,
}

impl Default for ValidationRules {
    fn default() -> Self {
        ValidationRules {
            min_turns: 3,
            max_turns: 10,
            min_participants: 2,
            max_participants: 4,
            require_answer: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    TooFewTurns { min: usize },
    TooManyTurns { max: usize },
    TooFewParticipants { min: usize },
    TooManyParticipants { max: usize },
    NoAnswer,
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::TooFewTurns { .. } => "min_turns",
            Violation::TooManyTurns { .. } => "max_turns",
            Violation::TooFewParticipants { .. } => "min_participants",
            Violation::TooManyParticipants { .. } => "max_participants",
            Violation::NoAnswer => "require_answer",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewTurns { min } => write!(f, "turns < {min}"),
            Violation::TooManyTurns { max } => write!(f, "turns > {max}"),
            Violation::TooFewParticipants { min } => write!(f, "participants < {min}"),
            Violation::TooManyParticipants { max } => write!(f, "participants > {max}"),
            Violation::NoAnswer => f.write_str("no answer"),
        }
    }
}

const RULES: [&str; 5] = [
    "min_turns",
    "max_turns",
    "min_participants",
    "max_participants",
    "require_answer",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub conversation_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationVerdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_conversation(c: &Conversation, rules: &ValidationRules) -> ValidationVerdict {
    let mut violations = Vec::new();
    let turns = c.turns();
    if turns < rules.min_turns {
        violations.push(Violation::TooFewTurns { min: rules.min_turns });
    }
    if turns > rules.max_turns {
        violations.push(Violation::TooManyTurns { max: rules.max_turns });
    }
    if c.participant_count < rules.min_participants {
        violations.push(Violation::TooFewParticipants {
            min: rules.min_participants,
        });
    }
    if c.participant_count > rules.max_participants {
        violations.push(Violation::TooManyParticipants {
            max: rules.max_participants,
        });
    }
    if rules.require_answer && !c.utterances.iter().any(|u| u.is_answer) {
        violations.push(Violation::NoAnswer);
    }
    ValidationVerdict {
        conversation_id: c.conversation_id.clone(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    pub valid_count: usize,
    pub invalid_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversation_count: usize,
    pub utterance_count: usize,
    /// Turn count → number of conversations with that many turns.
    pub turn_histogram: BTreeMap<usize, usize>,
    /// Tag code → number of utterances carrying it.
    pub tag_vocabulary: BTreeMap<String, usize>,
    /// Conversations passing every rule vs. failing at least one.
    pub validation: RuleCounts,
    pub per_rule: BTreeMap<String, RuleCounts>,
}

pub fn corpus_stats(corpus: &[Conversation], rules: &ValidationRules) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut stats = CorpusStats {
        conversation_count: corpus.len(),
        utterance_count: 0,
        turn_histogram: BTreeMap::new(),
        tag_vocabulary: BTreeMap::new(),
        validation: RuleCounts::default(),
        per_rule: RULES
            .iter()
            .map(|r| (r.to_string(), RuleCounts::default()))
            .collect(),
    };
    for c in corpus {
        stats.utterance_count += c.utterances.len();
        *stats.turn_histogram.entry(c.turns()).or_default() += 1;
        for tag in c.utterances.iter().flat_map(|u| &u.raw_tags) {
            *stats.tag_vocabulary.entry(tag.clone()).or_default() += 1;
        }
        let verdict = validate_conversation(c, rules);
        if verdict.is_valid() {
            stats.validation.valid_count += 1;
        } else {
            stats.validation.invalid_count += 1;
        }
        let failed: BTreeSet<&str> = verdict.violations.iter().map(Violation::rule).collect();
        for (rule, counts) in stats.per_rule.iter_mut() {
            if failed.contains(rule.as_str()) {
                counts.invalid_count += 1;
            } else {
                counts.valid_count += 1;
            }
        }
    }
    Ok(stats)
}
