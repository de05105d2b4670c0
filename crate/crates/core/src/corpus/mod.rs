//! Notes in, fixed-length integer sequences out.
//!
//! Index 0 is padding and index 1 stands for any word missing from the
//! training vocabulary; real words start at 2. Sequences are pre-padded with
//! zeros and truncated by keeping their head.

mod synthetic;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use synthetic::{generate_split, generate_synthetic, SyntheticSpec};

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
/// First index assigned to a vocabulary word.
pub const FIRST_WORD_INDEX: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("document text is empty")]
    EmptyText,
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(i64),
    #[error("no documents")]
    NoDocuments,
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("duplicate vocabulary word `{0}`")]
    DuplicateWord(String),
    #[error("percentile must lie in (0, 1], got {0}")]
    BadPercentile(f64),
    #[error("no lengths to take a percentile of")]
    NoLengths,
    #[error("max_len must be at least 1")]
    ZeroMaxLen,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
}

/// A labeled note. `label` is 1 for positive, 0 for negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub label: u8,
}

impl Document {
    pub fn new(text: impl Into<String>, label: i64) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        if !(0..=1).contains(&label) {
            return Err(CorpusError::BadLabel(label));
        }
        Ok(Self {
            text,
            label: label as u8,
        })
    }
}

/// Lowercases, treats every non-alphanumeric character as a separator and
/// drops empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Word-to-index map built from training text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    // words[i] has index i + FIRST_WORD_INDEX
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from words listed in index order.
    pub fn from_words(words: Vec<String>) -> Result<Self, CorpusError> {
        if words.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i + FIRST_WORD_INDEX).is_some() {
                return Err(CorpusError::DuplicateWord(w.clone()));
            }
        }
        Ok(Self { words, index })
    }

    /// Number of distinct words, excluding the pad and OOV slots.
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Rows an embedding table needs: the words plus pad and OOV.
    pub fn table_rows(&self) -> usize {
        self.words.len() + FIRST_WORD_INDEX
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV_INDEX)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(FIRST_WORD_INDEX)
            .and_then(|i| self.words.get(i))
            .map(String::as_str)
    }

    /// `(word, index)` pairs in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i + FIRST_WORD_INDEX))
    }
}

/// Assigns indices by descending token frequency, breaking ties
/// lexicographically.
pub fn build_vocabulary(training_docs: &[Document]) -> Result<Vocabulary, CorpusError> {
    if training_docs.is_empty() {
        return Err(CorpusError::NoDocuments);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in training_docs {
        for tok in tokenize(&doc.text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps it
    // within equal counts.
    ranked.sort_by_key(|e| core::cmp::Reverse(e.1));
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w).collect())
}

/// Nearest-rank percentile: the smallest observed length `L` such that at
/// least `ceil(percentile * n)` lengths are `<= L`.
pub fn compute_max_len(lengths: &[usize], percentile: f64) -> Result<usize, CorpusError> {
    if lengths.is_empty() {
        return Err(CorpusError::NoLengths);
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(CorpusError::BadPercentile(percentile));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    // Guard against products like 0.99 * 100 landing a hair above an integer.
    let rank = num_traits::Float::ceil(percentile * n as f64 - 1e-9).max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// Fixed-length integer sequences with their labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedBatch {
    max_len: usize,
    ids: Vec<usize>,
    labels: Vec<u8>,
}

impl EncodedBatch {
    pub fn new(max_len: usize, ids: Vec<usize>, labels: Vec<u8>) -> Result<Self, CorpusError> {
        if max_len == 0 {
            return Err(CorpusError::ZeroMaxLen);
        }
        if ids.len() != labels.len() * max_len {
            return Err(CorpusError::InvalidSpec("ids do not fill n_docs x max_len"));
        }
        Ok(Self {
            max_len,
            ids,
            labels,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.labels.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    /// Rows selected by `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        let mut ids = Vec::with_capacity(rows.len() * self.max_len);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            ids.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        EncodedBatch {
            max_len: self.max_len,
            ids,
            labels,
        }
    }

    pub fn max_index(&self) -> usize {
        self.ids.iter().copied().max().unwrap_or(0)
    }
}

/// Maps one token list to exactly `max_len` indices.
pub fn encode_tokens<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<usize> {
    let kept = tokens.len().min(max_len);
    let mut row = vec![PAD_INDEX; max_len - kept];
    row.extend(tokens[..kept].iter().map(|t| vocab.lookup(t.as_ref())));
    row
}

pub fn encode(
    docs: &[Document],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<EncodedBatch, CorpusError> {
    if max_len == 0 {
        return Err(CorpusError::ZeroMaxLen);
    }
    let mut ids = Vec::with_capacity(docs.len() * max_len);
    for doc in docs {
        ids.extend(encode_tokens(&tokenize(&doc.text), vocab, max_len));
    }
    let labels = docs.iter().map(|d| d.label).collect();
    EncodedBatch::new(max_len, ids, labels)
}

/// Token counts of each document.
pub fn token_lengths(docs: &[Document]) -> Vec<usize> {
    docs.iter().map(|d| tokenize(&d.text).len()).collect()
}
