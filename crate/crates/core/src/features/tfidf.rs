use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Sparse vector with entries sorted by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            dense[i] = w;
        }
        dense
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyFile {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
}

/// Terms indexed densely in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
    index: HashMap<String, usize>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(file: VocabularyFile) -> Result<Self> {
        if file.terms.len() != file.document_frequency.len() {
            return Err(Error::Data(
                "vocabulary: terms and frequencies differ in length".into(),
            ));
        }
        if file.document_frequency.iter().any(|&df| df > file.document_count) {
            return Err(Error::Data(
                "vocabulary: document frequency exceeds document count".into(),
            ));
        }
        let index: HashMap<String, usize> = file
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != file.terms.len() {
            return Err(Error::Data("vocabulary: duplicate term".into()));
        }
        Ok(Vocabulary {
            terms: file.terms,
            document_frequency: file.document_frequency,
            document_count: file.document_count,
            index,
        })
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            terms: v.terms,
            document_frequency: v.document_frequency,
            document_count: v.document_count,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.document_frequency[i])
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    /// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.document_count as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Content hash used to tie checkpoints to the vocabulary they were
    /// trained with.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&VocabularyFile::from(self.clone())).expect("serializable");
        sha256_hex(&bytes)
    }
}

pub fn tfidf_fit<S: AsRef<str>>(documents: &[Vec<S>]) -> Result<Vocabulary> {
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        let distinct: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let document_frequency = df.values().copied().collect();
    Vocabulary::try_from(VocabularyFile {
        terms,
        document_frequency,
        document_count: documents.len(),
    })
}

/// Raw term count times smoothed idf, L2-normalised. Terms outside the
/// vocabulary are ignored.
pub fn tfidf_transform<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, tf)| (i, tf as f64 * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in entries.iter_mut() {
            *w /= norm;
        }
    }
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}
