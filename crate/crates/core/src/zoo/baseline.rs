use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::ZooError;
use crate::corpus::{tokenize, Document, Vocabulary, FIRST_WORD_INDEX};
use crate::layers::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// L2 regularization constant.
    pub lambda: f64,
    pub epochs: usize,
    /// Seeds the per-epoch visiting order.
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            seed: 2,
        }
    }
}

/// Linear scorer over binary term presence, trained on the hinge loss with
/// an L2 penalty by stochastic subgradient steps of size `1 / (lambda t)`.
///
/// The bias is a constant feature regularized with the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// One weight per vocabulary word, in index order.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Baseline {
    pub fn param_count(vocab_size: usize) -> usize {
        vocab_size + 1
    }

    /// Distinct in-vocabulary word positions of `text`, sorted.
    pub fn features(text: &str, vocab: &Vocabulary) -> Vec<usize> {
        let mut f: Vec<usize> = tokenize(text)
            .iter()
            .map(|t| vocab.lookup(t))
            .filter(|&i| i >= FIRST_WORD_INDEX)
            .map(|i| i - FIRST_WORD_INDEX)
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn fit(
        docs: &[Document],
        vocab: &Vocabulary,
        config: &BaselineConfig,
    ) -> Result<Self, ZooError> {
        if vocab.size() == 0 {
            return Err(ZooError::EmptyVocabulary);
        }
        if docs.is_empty() {
            return Err(ZooError::NoDocuments);
        }
        if config.lambda <= 0.0 || !config.lambda.is_finite() {
            return Err(ZooError::Hyperparameter("lambda must be positive"));
        }
        let rows: Vec<(Vec<usize>, f64)> = docs
            .iter()
            .map(|d| {
                (
                    Self::features(&d.text, vocab),
                    if d.label == 1 { 1.0 } else { -1.0 },
                )
            })
            .collect();

        // w = scale * v keeps the shrink step O(1) for sparse rows
        let mut v = vec![0.0; vocab.size()];
        let mut v_bias = 0.0;
        let mut scale = 1.0;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut rng = Stream::seed_from_u64(config.seed);
        let mut t = 0usize;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &r in &order {
                t += 1;
                let (x, y) = &rows[r];
                let margin = y * scale * (v_bias + x.iter().map(|&j| v[j]).sum::<f64>());
                let eta = 1.0 / (config.lambda * t as f64);
                let shrink = 1.0 - eta * config.lambda;
                if shrink <= 0.0 {
                    v.iter_mut().for_each(|w| *w = 0.0);
                    v_bias = 0.0;
                    scale = 1.0;
                } else {
                    scale *= shrink;
                }
                if margin < 1.0 {
                    let step = eta * y / scale;
                    for &j in x {
                        v[j] += step;
                    }
                    v_bias += step;
                }
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    v_bias *= scale;
                    scale = 1.0;
                }
            }
        }
        Ok(Self {
            weights: v.iter().map(|w| w * scale).collect(),
            bias: v_bias * scale,
        })
    }

    pub fn margin(&self, text: &str, vocab: &Vocabulary) -> f64 {
        self.bias
            + Self::features(text, vocab)
                .iter()
                .filter_map(|&j| self.weights.get(j))
                .sum::<f64>()
    }

    pub fn margins(&self, docs: &[Document], vocab: &Vocabulary) -> Vec<f64> {
        docs.iter().map(|d| self.margin(&d.text, vocab)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, generate_split, SyntheticSpec};
    use crate::metrics::{accuracy, roc};
    use alloc::format;

    fn labels(docs: &[Document]) -> Vec<u8> {
        docs.iter().map(|d| d.label).collect()
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let docs: Vec<Document> = (0..20)
            .map(|i| {
                let marker = if i % 2 == 0 { "fever" } else { "calm" };
                Document::new(
                    format!("patient {marker} note {}", i % 3),
                    (i % 2 == 0) as i64,
                )
                .unwrap()
            })
            .collect();
        let vocab = build_vocabulary(&docs).unwrap();
        let model = Baseline::fit(&docs, &vocab, &BaselineConfig::default()).unwrap();
        assert_eq!(model.weights.len() + 1, Baseline::param_count(vocab.size()));
        let m = model.margins(&docs, &vocab);
        assert_eq!(accuracy(&m, &labels(&docs), 0.0), 1.0);
    }

    #[test]
    fn identical_documents_score_auc_one_half() {
        let docs: Vec<Document> = (0..10)
            .map(|i| Document::new("same words every time", (i % 2) as i64).unwrap())
            .collect();
        let vocab = build_vocabulary(&docs).unwrap();
        let model = Baseline::fit(&docs, &vocab, &BaselineConfig::default()).unwrap();
        assert_eq!(
            roc(&model.margins(&docs, &vocab), &labels(&docs))
                .unwrap()
                .auc,
            0.5
        );
    }

    #[test]
    fn synthetic_corpus_is_learnable() {
        let spec = SyntheticSpec::standard(1);
        let train = generate_split(&spec, 0).unwrap();
        let test = generate_split(&spec, 1).unwrap();
        let vocab = build_vocabulary(&train).unwrap();
        let model = Baseline::fit(&train, &vocab, &BaselineConfig::default()).unwrap();
        let auc = roc(&model.margins(&test, &vocab), &labels(&test))
            .unwrap()
            .auc;
        assert!(auc > 0.9, "auc {auc}");
    }

    #[test]
    fn invalid_inputs() {
        let docs = vec![Document::new("a b", 1).unwrap()];
        let vocab = build_vocabulary(&docs).unwrap();
        assert_eq!(
            Baseline::fit(&[], &vocab, &BaselineConfig::default()),
            Err(ZooError::NoDocuments)
        );
        let bad = BaselineConfig {
            lambda: 0.0,
            ..BaselineConfig::default()
        };
        assert!(Baseline::fit(&docs, &vocab, &bad).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let spec = SyntheticSpec {
            n_docs: 100,
            ..SyntheticSpec::standard(3)
        };
        let train = generate_split(&spec, 0).unwrap();
        let vocab = build_vocabulary(&train).unwrap();
        let cfg = BaselineConfig::default();
        assert_eq!(
            Baseline::fit(&train, &vocab, &cfg).unwrap(),
            Baseline::fit(&train, &vocab, &cfg).unwrap()
        );
    }
}
