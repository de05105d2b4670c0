//! Neural text classification engine for free-text notes.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! experimental pipeline short of file and process IO:
//!
//! - [`corpus`]: tokenization, the training-only vocabulary, fixed-length
//!   integer encoding and a seeded synthetic corpus generator.
//! - [`tensor`]: dense arrays and a tape-based reverse-mode gradient graph,
//!   plus a central-difference gradient checker.
//! - [`layers`]: embedding, dense, 1D convolution, separable convolution,
//!   pooling, dropout, LSTM and the bidirectional wrapper.
//! - [`zoo`]: the twelve architectures `a`..`l` and a bag-of-words linear
//!   baseline.
//! - [`train`]: binary cross-entropy, Adam, the early-stopping rule and the
//!   seeded training run.
//! - [`metrics`]: ROC curves, AUC and accuracy.
//!
//! Element types are generic: gradient checks run in `f64`, training runs
//! in `f32`.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod layers;
pub mod metrics;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use corpus::{Document, EncodedBatch, Vocabulary};
pub use metrics::RocCurve;
pub use tensor::{Graph, ParamStore, Scalar, Tensor, Var};
pub use train::{RunReport, TrainConfig};
pub use zoo::{Model, ModelId, ModelSpec};
