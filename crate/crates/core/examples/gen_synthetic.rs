//! Writes the separable benchmark corpus in the MSDialog layout.
//!
//! cargo run -p intent-core --example gen_synthetic -- data/synthetic_corpus.json

use intent_core::corpus::{to_document, FieldMapConfig};
use intent_core::model::named_rng;
use intent_core::synthetic::{synthetic_corpus, SyntheticSpec};

const SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_corpus.json".into());
    let corpus = synthetic_corpus(&SyntheticSpec::default(), &mut named_rng(SEED, "synthetic"));
    let doc = to_document(&corpus.conversations, &FieldMapConfig::default());
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    std::fs::write(&out, bytes)?;
    eprintln!("wrote {} conversations to {out}", corpus.conversations.len());
    Ok(())
}
