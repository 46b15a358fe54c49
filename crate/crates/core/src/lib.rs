//! Intent recognition for multi-turn information-seeking dialogues.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: ingest and validate conversation corpora
//! - [`curation`]: normalise, tokenise, lemmatise and strip stopwords
//! - [`features`]: POS tags, entities, frequencies, synonyms, sentiment, TF-IDF
//! - [`taxonomy`]: raw intent tags and their consolidation into five categories
//! - [`contextualize`]: per-utterance records and weight attribution reports
//! - [`model`]: feature assembly, classifier heads, AdamW training
//! - [`eval`]: confusion counts, precision/recall/F1, AUC-ROC
//!
//! [`pipeline`] wires the stages together, [`split`] holds the
//! conversation-level partition rules and [`synthetic`] generates the
//! separable benchmark corpus.

pub mod contextualize;
pub mod corpus;
pub mod curation;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod split;
pub mod synthetic;
pub mod taxonomy;
pub mod util;

pub use error::{Error, Result};
