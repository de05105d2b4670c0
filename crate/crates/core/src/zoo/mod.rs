//! The twelve neural architectures `a`..`l` and a linear bag-of-words
//! baseline.
//!
//! A [`ModelSpec`] names the architecture, resolves every hyperparameter and
//! carries the resulting layer plan and parameter count. [`Model`] turns a
//! spec into parameters drawn from a seeded stream.

mod baseline;
mod model;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::layers::{embedding_dim, Conv1d, Dense, Embedding, Lstm, SeparableConv1d};
use crate::tensor::{Activation, TensorError};

pub use baseline::{Baseline, BaselineConfig};
pub use model::{BatchLoss, Model};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZooError {
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("layer {layer} ({kind}): {reason}")]
    Plan {
        layer: usize,
        kind: &'static str,
        reason: String,
    },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(&'static str),
    #[error("stored spec does not match its model id: {0}")]
    Inconsistent(&'static str),
    #[error("batch max_len {got} does not match model max_len {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("token index {index} exceeds embedding rows {rows}")]
    TokenOutOfRange { index: usize, rows: usize },
    #[error("the baseline is not a neural model")]
    NotNeural,
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("no training documents")]
    NoDocuments,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
    Baseline,
}

impl ModelId {
    pub const NEURAL: [ModelId; 12] = [
        ModelId::A,
        ModelId::B,
        ModelId::C,
        ModelId::D,
        ModelId::E,
        ModelId::F,
        ModelId::G,
        ModelId::H,
        ModelId::I,
        ModelId::J,
        ModelId::K,
        ModelId::L,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::A => "a",
            ModelId::B => "b",
            ModelId::C => "c",
            ModelId::D => "d",
            ModelId::E => "e",
            ModelId::F => "f",
            ModelId::G => "g",
            ModelId::H => "h",
            ModelId::I => "i",
            ModelId::J => "j",
            ModelId::K => "k",
            ModelId::L => "l",
            ModelId::Baseline => "baseline",
        }
    }

    pub fn is_neural(self) -> bool {
        self != ModelId::Baseline
    }

    pub fn description(self) -> &'static str {
        match self {
            ModelId::A => "LSTM",
            ModelId::B => "LSTM with input and recurrent dropout",
            ModelId::C => "two stacked LSTMs",
            ModelId::D => "three stacked LSTMs",
            ModelId::E => "bidirectional LSTM",
            ModelId::F => "CNN with global max pooling",
            ModelId::G => "separable CNN with global max pooling",
            ModelId::H => "two pairs of convolutions, each pair pooled, then dense",
            ModelId::I => "two pooled convolutions, then dense",
            ModelId::J => "CNN and pooling feeding an LSTM",
            ModelId::K => "CNN and pooling feeding a bidirectional LSTM",
            ModelId::L => "bidirectional LSTM feeding a CNN",
            ModelId::Baseline => "bag-of-words linear classifier",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        ModelId::NEURAL
            .iter()
            .copied()
            .chain([ModelId::Baseline])
            .find(|id| id.as_str() == lower)
            .ok_or_else(|| ZooError::UnknownModel(s.to_string()))
    }
}

/// Hyperparameters shared by the architectures; each model uses the subset
/// its plan needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub hidden_size: usize,
    pub conv_filters: usize,
    pub conv_kernel_width: usize,
    pub dense_units: usize,
    pub pool_width: usize,
    pub pool_stride: usize,
    pub dropout_rate: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            conv_filters: 64,
            conv_kernel_width: 5,
            dense_units: 64,
            pool_width: 2,
            pool_stride: 2,
            dropout_rate: 0.2,
        }
    }
}

impl Hyperparameters {
    fn validate(&self) -> Result<(), ZooError> {
        let positive = [
            (self.hidden_size, "hidden_size must be positive"),
            (self.conv_filters, "conv_filters must be positive"),
            (self.conv_kernel_width, "conv_kernel_width must be positive"),
            (self.dense_units, "dense_units must be positive"),
            (self.pool_width, "pool_width must be positive"),
            (self.pool_stride, "pool_stride must be positive"),
        ];
        if let Some((_, msg)) = positive.iter().find(|(v, _)| *v == 0) {
            return Err(ZooError::Hyperparameter(msg));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ZooError::Hyperparameter("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One step of a layer plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Embedding {
        rows: usize,
        dim: usize,
    },
    Lstm {
        units: usize,
        return_sequences: bool,
        input_dropout: f64,
        recurrent_dropout: f64,
    },
    BiLstm {
        units: usize,
        return_sequences: bool,
        input_dropout: f64,
        recurrent_dropout: f64,
    },
    Conv1d {
        filters: usize,
        width: usize,
    },
    SeparableConv1d {
        filters: usize,
        width: usize,
    },
    MaxPool {
        width: usize,
        stride: usize,
    },
    GlobalMaxPool,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::BiLstm { .. } => "bilstm",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::SeparableConv1d { .. } => "separable_conv1d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalMaxPool => "global_maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Activation shape between layers, batch axis omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Tokens(usize),
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    /// Output shape and parameter count of `layer` applied to `self`.
    pub fn through(self, layer: &LayerSpec, index: usize) -> Result<(Shape, usize), ZooError> {
        let fail = |reason: String| ZooError::Plan {
            layer: index,
            kind: layer.kind(),
            reason,
        };
        let seq = |s: Shape| match s {
            Shape::Seq { len, channels } => Ok((len, channels)),
            other => Err(fail(format!("expects a sequence, got {other:?}"))),
        };
        let windowed = |len: usize, width: usize, stride: usize| {
            if width == 0 || len < width {
                Err(fail(format!(
                    "sequence length {len} is shorter than window {width}"
                )))
            } else {
                Ok((len - width) / stride + 1)
            }
        };
        Ok(match *layer {
            LayerSpec::Embedding { rows, dim } => match self {
                Shape::Tokens(len) => (
                    Shape::Seq { len, channels: dim },
                    Embedding::param_count(rows, dim),
                ),
                other => return Err(fail(format!("expects token ids, got {other:?}"))),
            },
            LayerSpec::Lstm {
                units,
                return_sequences,
                ..
            } => {
                let (len, c) = seq(self)?;
                let out = if return_sequences {
                    Shape::Seq {
                        len,
                        channels: units,
                    }
                } else {
                    Shape::Flat(units)
                };
                (out, Lstm::param_count(c, units))
            }
            LayerSpec::BiLstm {
                units,
                return_sequences,
                ..
            } => {
                let (len, c) = seq(self)?;
                let out = if return_sequences {
                    Shape::Seq {
                        len,
                        channels: 2 * units,
                    }
                } else {
                    Shape::Flat(2 * units)
                };
                (out, 2 * Lstm::param_count(c, units))
            }
            LayerSpec::Conv1d { filters, width } => {
                let (len, c) = seq(self)?;
                let len = windowed(len, width, 1)?;
                (
                    Shape::Seq {
                        len,
                        channels: filters,
                    },
                    Conv1d::param_count(width, c, filters),
                )
            }
            LayerSpec::SeparableConv1d { filters, width } => {
                let (len, c) = seq(self)?;
                let len = windowed(len, width, 1)?;
                (
                    Shape::Seq {
                        len,
                        channels: filters,
                    },
                    SeparableConv1d::param_count(width, c, filters),
                )
            }
            LayerSpec::MaxPool { width, stride } => {
                let (len, channels) = seq(self)?;
                (
                    Shape::Seq {
                        len: windowed(len, width, stride)?,
                        channels,
                    },
                    0,
                )
            }
            LayerSpec::GlobalMaxPool => (Shape::Flat(seq(self)?.1), 0),
            LayerSpec::Dropout { .. } => (self, 0),
            LayerSpec::Flatten => {
                let (len, c) = seq(self)?;
                (Shape::Flat(len * c), 0)
            }
            LayerSpec::Dense { units, .. } => match self {
                Shape::Flat(c) => (Shape::Flat(units), Dense::param_count(c, units)),
                other => return Err(fail(format!("expects flat features, got {other:?}"))),
            },
        })
    }
}

/// Output shape and total parameter count of a plan run on `max_len` ids.
pub fn infer(plan: &[LayerSpec], max_len: usize) -> Result<(Shape, usize), ZooError> {
    let mut shape = Shape::Tokens(max_len);
    let mut total = 0;
    for (i, layer) in plan.iter().enumerate() {
        let (next, count) = shape.through(layer, i)?;
        shape = next;
        total += count;
    }
    Ok((shape, total))
}

/// Layer plan for a neural architecture; empty for the baseline.
pub fn layer_plan(
    id: ModelId,
    vocab_size: usize,
    embedding_dim: usize,
    hp: &Hyperparameters,
) -> Vec<LayerSpec> {
    use LayerSpec as Ls;
    let h = hp.hidden_size;
    let rate = hp.dropout_rate;
    let embed = Ls::Embedding {
        rows: vocab_size + crate::corpus::FIRST_WORD_INDEX,
        dim: embedding_dim,
    };
    let lstm = |seq: bool, drop: f64| Ls::Lstm {
        units: h,
        return_sequences: seq,
        input_dropout: drop,
        recurrent_dropout: drop,
    };
    let bilstm = |seq: bool| Ls::BiLstm {
        units: h,
        return_sequences: seq,
        input_dropout: rate,
        recurrent_dropout: rate,
    };
    let conv = Ls::Conv1d {
        filters: hp.conv_filters,
        width: hp.conv_kernel_width,
    };
    let pool = Ls::MaxPool {
        width: hp.pool_width,
        stride: hp.pool_stride,
    };
    let drop = Ls::Dropout { rate };
    let dense = Ls::Dense {
        units: hp.dense_units,
        activation: Activation::Relu,
    };
    let head = Ls::Dense {
        units: 1,
        activation: Activation::Sigmoid,
    };
    match id {
        ModelId::A => vec![embed, lstm(false, 0.0), head],
        ModelId::B => vec![embed, lstm(false, rate), head],
        ModelId::C => vec![embed, lstm(true, rate), lstm(false, rate), head],
        ModelId::D => vec![
            embed,
            lstm(true, rate),
            lstm(true, rate),
            lstm(false, rate),
            head,
        ],
        ModelId::E => vec![embed, bilstm(false), head],
        ModelId::F => vec![embed, conv, Ls::GlobalMaxPool, drop, head],
        ModelId::G => vec![
            embed,
            Ls::SeparableConv1d {
                filters: hp.conv_filters,
                width: hp.conv_kernel_width,
            },
            Ls::GlobalMaxPool,
            drop,
            head,
        ],
        ModelId::H => vec![
            embed,
            conv,
            conv,
            pool,
            conv,
            conv,
            pool,
            drop,
            Ls::Flatten,
            dense,
            drop,
            head,
        ],
        ModelId::I => vec![
            embed,
            conv,
            pool,
            conv,
            pool,
            drop,
            Ls::Flatten,
            dense,
            drop,
            head,
        ],
        ModelId::J => vec![embed, conv, pool, lstm(false, rate), head],
        ModelId::K => vec![embed, conv, pool, bilstm(false), head],
        ModelId::L => vec![embed, bilstm(true), conv, Ls::GlobalMaxPool, head],
        ModelId::Baseline => Vec::new(),
    }
}

/// A fully resolved architecture: id, every hyperparameter, the layer plan
/// and its parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    /// Vocabulary words, excluding the pad and out-of-vocabulary rows.
    pub vocab_size: usize,
    pub max_len: usize,
    pub embedding_dim: usize,
    #[serde(flatten)]
    pub hyper: Hyperparameters,
    pub parameter_count: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(
        model_id: ModelId,
        vocab_size: usize,
        max_len: usize,
        embedding_dim: usize,
        hyper: Hyperparameters,
    ) -> Result<Self, ZooError> {
        if vocab_size == 0 {
            return Err(ZooError::EmptyVocabulary);
        }
        if max_len == 0 {
            return Err(ZooError::Hyperparameter("max_len must be positive"));
        }
        if embedding_dim == 0 {
            return Err(ZooError::Hyperparameter("embedding_dim must be positive"));
        }
        hyper.validate()?;
        let layers = layer_plan(model_id, vocab_size, embedding_dim, &hyper);
        let parameter_count = if model_id.is_neural() {
            match infer(&layers, max_len)? {
                (Shape::Flat(1), count) => count,
                (other, _) => {
                    return Err(ZooError::Plan {
                        layer: layers.len() - 1,
                        kind: "head",
                        reason: format!("plan ends in {other:?}, expected one output"),
                    })
                }
            }
        } else {
            Baseline::param_count(vocab_size)
        };
        Ok(Self {
            model_id,
            vocab_size,
            max_len,
            embedding_dim,
            hyper,
            parameter_count,
            layers,
        })
    }

    /// Default hyperparameters and the fourth-root embedding width.
    pub fn standard(
        model_id: ModelId,
        vocab_size: usize,
        max_len: usize,
    ) -> Result<Self, ZooError> {
        Self::new(
            model_id,
            vocab_size,
            max_len,
            embedding_dim(vocab_size),
            Hyperparameters::default(),
        )
    }

    /// Rebuilds the spec from its inputs and checks the stored plan and
    /// count agree, as after loading one from disk.
    pub fn validate(&self) -> Result<(), ZooError> {
        let fresh = Self::new(
            self.model_id,
            self.vocab_size,
            self.max_len,
            self.embedding_dim,
            self.hyper,
        )?;
        if fresh.layers != self.layers {
            return Err(ZooError::Inconsistent("layer plan"));
        }
        if fresh.parameter_count != self.parameter_count {
            return Err(ZooError::Inconsistent("parameter_count"));
        }
        Ok(())
    }

    pub fn embedding_rows(&self) -> usize {
        self.vocab_size + crate::corpus::FIRST_WORD_INDEX
    }
}
