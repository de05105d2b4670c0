//! Seeded synthetic corpora standing in for private clinical notes.
//!
//! Every document draws its tokens from a base vocabulary `w0 .. w{V-1}`.
//! A seeded subset of those words are markers. In a negative document every
//! slot is uniform over the whole base vocabulary, so each marker appears at
//! the background rate `1 / V`. In a positive document each slot holds a
//! given marker with probability `marker_probability` and is otherwise
//! uniform over the non-marker words.
//!
//! `shift` emulates a second site with different writing habits: that
//! fraction of the markers is replaced, in positive documents only, by fresh
//! words `v0, v1, ..` that never occur in unshifted splits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Document};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub positive_fraction: f64,
    pub vocab_size: usize,
    pub n_marker_words: usize,
    /// Per-slot probability of each individual marker in positive documents.
    pub marker_probability: f64,
    pub mean_length: usize,
    pub length_jitter: usize,
    pub seed: u64,
    /// Fraction of markers swapped for unseen words in positive documents.
    #[serde(default)]
    pub shift: f64,
}

impl SyntheticSpec {
    /// 1000 balanced documents, 2000 base words, 20 markers at ten times
    /// the background rate, lengths 200 ± 50.
    pub fn standard(seed: u64) -> Self {
        Self {
            n_docs: 1000,
            positive_fraction: 0.5,
            vocab_size: 2000,
            n_marker_words: 20,
            marker_probability: 10.0 / 2000.0,
            mean_length: 200,
            length_jitter: 50,
            seed,
            shift: 0.0,
        }
    }

    /// Per-slot probability of any single base word in a negative document.
    pub fn background_rate(&self) -> f64 {
        1.0 / self.vocab_size as f64
    }

    /// Sets `marker_probability` to `lift` times the background rate.
    pub fn with_lift(mut self, lift: f64) -> Self {
        self.marker_probability = lift * self.background_rate();
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m| Err(CorpusError::InvalidSpec(m));
        if self.n_docs == 0 {
            return bad("n_docs must be positive");
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad("positive_fraction must lie in (0, 1)");
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.n_marker_words == 0 || self.n_marker_words >= self.vocab_size {
            return bad("n_marker_words must be positive and smaller than vocab_size");
        }
        if !(self.marker_probability > 0.0 && self.marker_probability <= 1.0) {
            return bad("marker_probability must lie in (0, 1]");
        }
        // exact comparison would reject lift 1.0 through rounding
        if self.marker_probability < self.background_rate() * (1.0 - 1e-12) {
            return bad("marker_probability is below the background rate");
        }
        if self.marker_probability * self.n_marker_words as f64 > 1.0 {
            return bad("markers alone exceed one token per slot");
        }
        if self.mean_length == 0 || self.length_jitter >= self.mean_length {
            return bad("length_jitter must be smaller than a positive mean_length");
        }
        if !(0.0..=1.0).contains(&self.shift) {
            return bad("shift must lie in [0, 1]");
        }
        Ok(())
    }

    /// Base-vocabulary indices of the marker words.
    pub fn marker_indices(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut all: Vec<usize> = (0..self.vocab_size).collect();
        let (chosen, _) = all.partial_shuffle(&mut rng, self.n_marker_words);
        let mut markers = chosen.to_vec();
        markers.sort_unstable();
        markers
    }

    /// Marker words as written into positive documents, after `shift`.
    pub fn marker_words(&self) -> Vec<String> {
        let replaced = self.replaced_markers();
        self.marker_indices()
            .into_iter()
            .enumerate()
            .map(|(j, idx)| {
                if j < replaced {
                    format!("v{j}")
                } else {
                    base_word(idx)
                }
            })
            .collect()
    }

    fn replaced_markers(&self) -> usize {
        let r = self.shift * self.n_marker_words as f64;
        (num_traits::Float::round(r) as usize).min(self.n_marker_words)
    }
}

pub fn base_word(index: usize) -> String {
    format!("w{index}")
}

/// Generates split 0 of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Document>, CorpusError> {
    generate_split(spec, 0)
}

/// Generates one split. Splits of the same spec share the marker set but
/// draw documents from independent streams keyed by `split`.
pub fn generate_split(spec: &SyntheticSpec, split: u64) -> Result<Vec<Document>, CorpusError> {
    spec.validate()?;
    let markers = spec.marker_indices();
    let marker_words = spec.marker_words();
    let mut is_marker = vec![false; spec.vocab_size];
    for &m in &markers {
        is_marker[m] = true;
    }
    let plain: Vec<usize> = (0..spec.vocab_size).filter(|&i| !is_marker[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split + 1);

    let n_pos = num_traits::Float::round(spec.positive_fraction * spec.n_docs as f64) as usize;
    let mut labels: Vec<u8> = (0..spec.n_docs).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);

    let any_marker = spec.marker_probability * markers.len() as f64;
    let mut docs = Vec::with_capacity(spec.n_docs);
    for label in labels {
        let len = rng.gen_range(
            spec.mean_length - spec.length_jitter..=spec.mean_length + spec.length_jitter,
        );
        let mut text = String::with_capacity(len * 6);
        for slot in 0..len {
            if slot > 0 {
                text.push(' ');
            }
            if label == 1 {
                if rng.gen::<f64>() < any_marker {
                    text.push_str(&marker_words[rng.gen_range(0..marker_words.len())]);
                } else {
                    text.push_str(&base_word(plain[rng.gen_range(0..plain.len())]));
                }
            } else {
                text.push_str(&base_word(rng.gen_range(0..spec.vocab_size)));
            }
            if slot % 12 == 11 {
                text.push('.');
            }
        }
        docs.push(Document { text, label });
    }
    Ok(docs)
}
