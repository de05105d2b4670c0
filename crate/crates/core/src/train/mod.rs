//! Seeded training with the loss-plateau stopping rule.
//!
//! A run draws parameters from `seed_init` and everything stochastic during
//! training (visiting order, dropout masks) from `seed_stochastic`, so equal
//! seeds reproduce the whole trajectory.

mod adam;
mod stop;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EncodedBatch, Vocabulary};
use crate::metrics::{accuracy, roc, MetricsError, RocPoint};
use crate::tensor::{Checkpoint, CheckpointError, Graph, Scalar, TensorError};
use crate::zoo::{Baseline, BaselineConfig, Model, ModelId, ModelSpec, ZooError};

pub use adam::Adam;
pub use stop::{select_epoch, should_stop};

/// Clamp applied to probabilities inside the cross-entropy loss.
pub const BCE_EPSILON: f64 = 1e-7;

/// Documents per forward pass when scoring a whole split.
const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("{expected} probabilities for {got} labels")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no training documents")]
    NoDocuments,
    #[error("epoch sink failed: {0}")]
    Sink(String),
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// An epoch whose loss drops by no more than this has not improved.
    pub stop_min_delta: f64,
    /// Consecutive non-improving epochs that end training.
    pub stop_patience: usize,
    pub seed_init: u64,
    pub seed_stochastic: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 3e-3,
            max_epochs: 30,
            stop_min_delta: 0.01,
            stop_patience: 2,
            seed_init: 1,
            seed_stochastic: 2,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(
                "learning_rate must be finite and non-negative",
            ));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1"));
        }
        if !(self.stop_min_delta >= 0.0) {
            return Err(TrainError::Config("stop_min_delta must be non-negative"));
        }
        if self.stop_patience == 0 {
            return Err(TrainError::Config("stop_patience must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    /// Mean of the batch losses.
    pub loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub accuracy: f64,
    pub seconds: f64,
}

/// Scores of one model on one labeled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub auc: f64,
    pub accuracy: f64,
    /// Cross-entropy; absent for margin scores.
    pub loss: Option<f64>,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_id: ModelId,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Last epoch trained.
    pub stop_epoch: usize,
    /// Whether the stopping rule fired before `max_epochs`.
    pub stopped_early: bool,
    /// Epoch whose parameters were evaluated: the lowest training loss.
    pub selected_epoch: usize,
    /// `stop_epoch - stop_patience`, for comparison with `selected_epoch`.
    pub patience_epoch: Option<usize>,
    pub selected_checkpoint: String,
    /// Set for linear-baseline runs, whose `epochs` list is empty.
    pub baseline: Option<BaselineConfig>,
    pub test: Evaluation,
    pub validation: Option<Evaluation>,
    /// Wall-clock seconds until training stopped.
    pub seconds_to_stop: f64,
    pub total_seconds: f64,
}

impl RunReport {
    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r.seconds_to_stop = 0.0;
        r.total_seconds = 0.0;
        r
    }
}

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// A clock that never advances, for callers without a time source.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now(&mut self) -> f64 {
        0.0
    }
}

/// Receives every finished epoch with that epoch's parameters.
pub trait EpochSink {
    fn epoch_end(&mut self, record: &EpochRecord, checkpoint: &Checkpoint) -> Result<(), String>;
}

impl EpochSink for () {
    fn epoch_end(&mut self, _: &EpochRecord, _: &Checkpoint) -> Result<(), String> {
        Ok(())
    }
}

/// File name of fitted baseline weights inside a run directory.
pub const BASELINE_FILE: &str = "baseline.json";

/// Name under which the CLI stores the parameters after `epoch`.
pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[BCE_EPSILON, 1 - BCE_EPSILON]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    if probs.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(TrainError::NoDocuments);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            if y == 1 {
                -libm_ln(p)
            } else {
                -libm_ln(1.0 - p)
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

fn libm_ln(x: f64) -> f64 {
    num_traits::Float::ln(x)
}

/// One pass over `data` in mini-batches, visiting documents in an order
/// drawn from the model's stochastic stream when `shuffle` is set.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    data: &EncodedBatch,
    optimizer: &mut Adam,
    config: &TrainConfig,
    epoch: usize,
    clock: &mut dyn Clock,
) -> Result<EpochRecord, TrainError> {
    config.validate()?;
    let n = data.n_docs();
    if n == 0 {
        return Err(TrainError::NoDocuments);
    }
    let start = clock.now();
    let mut order: Vec<usize> = (0..n).collect();
    if config.shuffle {
        order.shuffle(model.stochastic_mut());
    }
    let eps = T::of(BCE_EPSILON);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut batches = 0usize;
    for (b, rows) in order.chunks(config.batch_size).enumerate() {
        let batch = data.select(rows);
        let targets: Vec<T> = batch
            .labels()
            .iter()
            .map(|&l| T::of(f64::from(l)))
            .collect();
        let mut g = Graph::new();
        let (bound, out) = model.forward_graph(&mut g, &batch, true)?;
        let loss = g.bce(out, &targets, eps)?;
        let value = g.value(loss).data()[0].as_f64();
        // clamping inside the loss maps NaN probabilities to a finite value
        if !value.is_finite() || g.value(out).data().iter().any(|p| !p.as_f64().is_finite()) {
            return Err(TrainError::NonFinite {
                epoch,
                batch: b + 1,
            });
        }
        correct += g
            .value(out)
            .data()
            .iter()
            .zip(batch.labels())
            .filter(|(&p, &l)| (p.as_f64() >= 0.5) == (l == 1))
            .count();
        g.backward(loss)?;
        let params = model.params_mut();
        params.zero_grads();
        params.accumulate_grads(&g, &bound);
        optimizer.step(params);
        loss_sum += value;
        batches += 1;
    }
    Ok(EpochRecord {
        epoch,
        loss: loss_sum / batches as f64,
        accuracy: correct as f64 / n as f64,
        seconds: clock.now() - start,
    })
}

/// Evaluation-mode probabilities for every document of `data`.
pub fn predict_all<T: Scalar>(
    model: &Model<T>,
    data: &EncodedBatch,
) -> Result<Vec<f64>, TrainError> {
    let mut probs = Vec::with_capacity(data.n_docs());
    let rows: Vec<usize> = (0..data.n_docs()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let p = model.predict(&data.select(chunk))?;
        probs.extend(p.iter().map(|v| v.as_f64()));
    }
    Ok(probs)
}

/// AUC, accuracy at 0.5, loss and ROC points for `probs` against `labels`.
pub fn score(probs: &[f64], labels: &[u8]) -> Result<Evaluation, TrainError> {
    let curve = roc(probs, labels)?;
    Ok(Evaluation {
        auc: curve.auc,
        accuracy: accuracy(probs, labels, 0.5),
        loss: Some(bce_loss(probs, labels)?),
        roc: curve.points,
    })
}

/// As [`score`] for real-valued margins, classified positive from 0.
pub fn score_margins(margins: &[f64], labels: &[u8]) -> Result<Evaluation, TrainError> {
    let curve = roc(margins, labels)?;
    Ok(Evaluation {
        auc: curve.auc,
        accuracy: accuracy(margins, labels, 0.0),
        loss: None,
        roc: curve.points,
    })
}

pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &EncodedBatch,
) -> Result<Evaluation, TrainError> {
    score(&predict_all(model, data)?, data.labels())
}

/// A finished run: its report and the model holding the selected epoch's
/// parameters.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub report: RunReport,
    pub model: Model<T>,
    pub selected: Checkpoint,
}

/// Trains until the stopping rule fires or `max_epochs` pass, keeps the
/// parameters of the lowest-loss epoch, and evaluates them on `test` and,
/// when given, `validation`.
pub fn run<T: Scalar>(
    spec: &ModelSpec,
    train: &EncodedBatch,
    test: &EncodedBatch,
    validation: Option<&EncodedBatch>,
    config: &TrainConfig,
    clock: &mut dyn Clock,
    sink: &mut dyn EpochSink,
) -> Result<RunOutcome<T>, TrainError> {
    config.validate()?;
    let t0 = clock.now();
    let mut model = Model::<T>::build(spec, config.seed_init, config.seed_stochastic)?;
    let mut optimizer = Adam::new(config.learning_rate);
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut losses: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        let record = train_epoch(&mut model, train, &mut optimizer, config, epoch, clock)?;
        let ckpt = model.params().to_checkpoint();
        sink.epoch_end(&record, &ckpt).map_err(TrainError::Sink)?;
        losses.push(record.loss);
        if best.as_ref().is_none_or(|(l, _)| record.loss < *l) {
            best = Some((record.loss, ckpt));
        }
        epochs.push(record);
        if should_stop(&losses, config.stop_min_delta, config.stop_patience) {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    let seconds_to_stop = clock.now() - t0;
    let stop_epoch = epochs.len();
    let selected_epoch = select_epoch(&losses);
    let selected = best.map(|(_, c)| c).unwrap_or_default();
    model.params_mut().load_checkpoint(&selected)?;

    let test_eval = evaluate(&model, test)?;
    let validation = validation.map(|v| evaluate(&model, v)).transpose()?;
    let report = RunReport {
        model_id: spec.model_id,
        spec: spec.clone(),
        config: config.clone(),
        epochs,
        stop_epoch,
        stopped_early,
        selected_epoch,
        patience_epoch: stop_epoch
            .checked_sub(config.stop_patience)
            .filter(|&e| e >= 1),
        selected_checkpoint: checkpoint_name(selected_epoch),
        baseline: None,
        test: test_eval,
        validation,
        seconds_to_stop,
        total_seconds: clock.now() - t0,
    };
    Ok(RunOutcome {
        report,
        model,
        selected,
    })
}

/// Fits the linear baseline on `train` and scores margins on `test` and,
/// when given, `validation`.
///
/// The report mirrors a neural run with no per-epoch records: stop and
/// selected epoch are both the configured epoch count.
pub fn run_baseline(
    spec: &ModelSpec,
    train: &[Document],
    vocab: &Vocabulary,
    test: &[Document],
    validation: Option<&[Document]>,
    config: &TrainConfig,
    baseline: &BaselineConfig,
    clock: &mut dyn Clock,
) -> Result<(RunReport, Baseline), TrainError> {
    if spec.model_id != ModelId::Baseline {
        return Err(TrainError::Config("baseline run needs a baseline spec"));
    }
    let t0 = clock.now();
    let model = Baseline::fit(train, vocab, baseline)?;
    let seconds_to_stop = clock.now() - t0;
    let eval = |docs: &[Document]| {
        let labels: Vec<u8> = docs.iter().map(|d| d.label).collect();
        score_margins(&model.margins(docs, vocab), &labels)
    };
    let test = eval(test)?;
    let validation = validation.map(eval).transpose()?;
    let report = RunReport {
        model_id: ModelId::Baseline,
        spec: spec.clone(),
        config: config.clone(),
        epochs: Vec::new(),
        stop_epoch: baseline.epochs,
        stopped_early: false,
        selected_epoch: baseline.epochs,
        patience_epoch: None,
        selected_checkpoint: String::from(BASELINE_FILE),
        baseline: Some(*baseline),
        test,
        validation,
        seconds_to_stop,
        total_seconds: clock.now() - t0,
    };
    Ok((report, model))
}
