use intent_core::corpus::UtteranceKey;
use intent_core::curation::{curate_text, CurationConfig};
use intent_core::features::{document_terms, extract_features, tfidf_fit, Lexicons, Polarity};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    text: String,
    normalized_text: String,
    tokens: Vec<String>,
    removed_stopwords: Vec<(usize, String)>,
    kept_lemmas: Vec<String>,
}

fn golden() -> Golden {
    serde_json::from_str(include_str!("golden/question.json")).unwrap()
}

#[test]
fn question_curates_to_golden_tokens() {
    let g = golden();
    let clean = curate_text(UtteranceKey::new("c", "1"), &g.text, &CurationConfig::default());
    assert_eq!(clean.normalized_text, g.normalized_text);
    assert_eq!(clean.tokens, g.tokens);
    assert_eq!(clean.removed_stopwords, g.removed_stopwords);
    assert_eq!(clean.kept_lemmas(), g.kept_lemmas);
    assert_eq!(clean.lemmas.len(), clean.tokens.len());
}

#[test]
fn question_features() {
    let g = golden();
    let clean = curate_text(UtteranceKey::new("c", "1"), &g.text, &CurationConfig::default());
    let vocab = tfidf_fit(&[document_terms(&clean)]).unwrap();
    let bundle = extract_features(&clean, &vocab, &Lexicons::default());
    let spans: Vec<(usize, usize, &str)> = bundle
        .entities
        .iter()
        .map(|e| (e.span_start, e.span_end, e.entity_type.as_str()))
        .collect();
    assert_eq!(spans, [(2, 4, "PRODUCT"), (5, 6, "TECH")]);
    assert_eq!(bundle.sentiment.polarity, Polarity::Neutral);
    assert_eq!(bundle.word_freq.values().sum::<usize>(), 11);
}
