//! Run directories: training writes one, evaluation reads one back.
//!
//! ```text
//! <out>/config.toml            resolved run configuration
//! <out>/model.toml             resolved model spec
//! <out>/vocab.tsv              training vocabulary
//! <out>/checkpoints/epoch-NNN.ckpt   parameters after each epoch
//! <out>/baseline.json          fitted weights, baseline runs only
//! <out>/report.json            run report
//! <out>/curve.csv              per-epoch loss and accuracy
//! <out>/roc_test.csv, roc_validation.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use textclf_core::corpus::{
    build_vocabulary, compute_max_len, encode, token_lengths, Document, Vocabulary,
};
use textclf_core::layers::embedding_dim;
use textclf_core::tensor::Checkpoint;
use textclf_core::train::{
    self, checkpoint_name, score, score_margins, Clock, EpochRecord, EpochSink, Evaluation,
    RunReport, BASELINE_FILE,
};
use textclf_core::zoo::{Baseline, Model, ModelSpec};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;
use crate::formats::{
    load_checkpoint, load_json, load_jsonl, load_toml, load_vocabulary, save_checkpoint,
    save_curve_csv, save_json, save_roc_csv, save_toml, save_vocabulary,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const SPEC_FILE: &str = "model.toml";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Scalar type of trained models. Checkpoints hold 64-bit values, so an
/// f32 parameter survives a save and load unchanged.
pub type Real = f32;

/// Seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

struct CheckpointDir(PathBuf);

impl EpochSink for CheckpointDir {
    fn epoch_end(&mut self, record: &EpochRecord, checkpoint: &Checkpoint) -> Result<(), String> {
        save_checkpoint(checkpoint, &self.0.join(checkpoint_name(record.epoch)))
            .map_err(|e| e.message)
    }
}

/// Datasets of one run, with the vocabulary and spec derived from the
/// training split alone.
pub struct Prepared {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub validation: Option<Vec<Document>>,
    pub vocab: Vocabulary,
    pub spec: ModelSpec,
}

fn nonempty(docs: Vec<Document>, path: &Path) -> Result<Vec<Document>, CliError> {
    if docs.is_empty() {
        return Err(CliError::data(format!("{}: no documents", path.display())));
    }
    Ok(docs)
}

pub fn prepare(r: &Resolved) -> Result<Prepared, CliError> {
    let train = nonempty(load_jsonl(&r.train)?, &r.train)?;
    let test = nonempty(load_jsonl(&r.test)?, &r.test)?;
    let validation = match &r.validation {
        Some(p) => Some(nonempty(load_jsonl(p)?, p)?),
        None => None,
    };
    let vocab = build_vocabulary(&train).map_err(|e| CliError::read(&r.train, e))?;
    let c = &r.config;
    let max_len = match c.max_len {
        Some(n) => n,
        None => compute_max_len(&token_lengths(&train), c.max_len_percentile)
            .map_err(|e| CliError::read(&r.train, e))?,
    };
    let dim = c
        .embedding_dim
        .unwrap_or_else(|| embedding_dim(vocab.size()));
    let spec = ModelSpec::new(r.model, vocab.size(), max_len, dim, c.hyper)?;
    Ok(Prepared {
        train,
        test,
        validation,
        vocab,
        spec,
    })
}

fn labels(docs: &[Document]) -> Vec<u8> {
    docs.iter().map(|d| d.label).collect()
}

fn write_roc(dir: &Path, name: &str, eval: &Evaluation) -> Result<(), CliError> {
    save_roc_csv(&eval.roc, &dir.join(format!("roc_{name}.csv")))
}

/// Trains the configured model and writes its run directory.
pub fn train_run(r: &Resolved) -> Result<RunReport, CliError> {
    let p = prepare(r)?;
    let out = &r.out;
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::write(&ckpt_dir, e))?;
    save_toml(&r.config, &out.join(CONFIG_FILE))?;
    save_toml(&p.spec, &out.join(SPEC_FILE))?;
    save_vocabulary(&p.vocab, &out.join(VOCAB_FILE))?;

    let mut clock = WallClock::start();
    let report = if r.model.is_neural() {
        let enc = |docs: &[Document]| encode(docs, &p.vocab, p.spec.max_len);
        let (tr, te) = (enc(&p.train)?, enc(&p.test)?);
        let va = p.validation.as_deref().map(enc).transpose()?;
        let mut sink = CheckpointDir(ckpt_dir);
        let outcome = train::run::<Real>(
            &p.spec,
            &tr,
            &te,
            va.as_ref(),
            &r.config.training,
            &mut clock,
            &mut sink,
        )?;
        outcome.report
    } else {
        let (report, model) = train::run_baseline(
            &p.spec,
            &p.train,
            &p.vocab,
            &p.test,
            p.validation.as_deref(),
            &r.config.training,
            &r.config.baseline,
            &mut clock,
        )?;
        save_json(&model, &out.join(BASELINE_FILE))?;
        report
    };
    save_json(&report, &out.join(REPORT_FILE))?;
    save_curve_csv(&report.epochs, &out.join(CURVE_FILE))?;
    write_roc(out, "test", &report.test)?;
    if let Some(v) = &report.validation {
        write_roc(out, "validation", v)?;
    }
    Ok(report)
}

/// A trained model restored from a run directory.
pub enum Restored {
    Neural(Model<Real>),
    Baseline(Baseline),
}

pub struct RunDir {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub vocab: Vocabulary,
    pub report: RunReport,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let config: RunConfig = load_toml(&dir.join(CONFIG_FILE))?;
        let spec: ModelSpec = load_toml(&dir.join(SPEC_FILE))?;
        spec.validate()
            .map_err(|e| CliError::read(&dir.join(SPEC_FILE), e))?;
        let vocab = load_vocabulary(&dir.join(VOCAB_FILE))?;
        if vocab.size() != spec.vocab_size {
            return Err(CliError::data(format!(
                "vocabulary has {} words but the model spec expects {}",
                vocab.size(),
                spec.vocab_size
            )));
        }
        let report = load_json(&dir.join(REPORT_FILE))?;
        Ok(Self {
            config,
            spec,
            vocab,
            report,
        })
    }

    /// The selected checkpoint, or `checkpoint` when given.
    pub fn restore(&self, dir: &Path, checkpoint: Option<&Path>) -> Result<Restored, CliError> {
        let default = if self.spec.model_id.is_neural() {
            dir.join(CHECKPOINT_DIR)
                .join(&self.report.selected_checkpoint)
        } else {
            dir.join(BASELINE_FILE)
        };
        let path = checkpoint.unwrap_or(&default);
        if !self.spec.model_id.is_neural() {
            let b: Baseline = load_json(path)?;
            if b.weights.len() != self.vocab.size() {
                return Err(CliError::data(format!(
                    "{}: weights do not match the vocabulary",
                    path.display()
                )));
            }
            return Ok(Restored::Baseline(b));
        }
        let ckpt = load_checkpoint(path)?;
        let t = &self.config.training;
        let mut model = Model::<Real>::build(&self.spec, t.seed_init, t.seed_stochastic)?;
        model
            .params_mut()
            .load_checkpoint(&ckpt)
            .map_err(|e| CliError::read(path, e))?;
        Ok(Restored::Neural(model))
    }

    pub fn evaluate(&self, model: &Restored, docs: &[Document]) -> Result<Evaluation, CliError> {
        let y = labels(docs);
        let eval = match model {
            Restored::Neural(m) => {
                let batch = encode(docs, &self.vocab, self.spec.max_len)?;
                score(&train::predict_all(m, &batch)?, &y)?
            }
            Restored::Baseline(b) => score_margins(&b.margins(docs, &self.vocab), &y)?,
        };
        Ok(eval)
    }
}

/// Metrics document written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub run: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub data: PathBuf,
    pub n_docs: usize,
    pub auc: f64,
    pub accuracy: f64,
    pub loss: Option<f64>,
}

pub fn evaluate_run(
    dir: &Path,
    checkpoint: Option<&Path>,
    data: &Path,
    out: &Path,
) -> Result<EvaluationReport, CliError> {
    let run = RunDir::open(dir)?;
    let model = run.restore(dir, checkpoint)?;
    let docs = nonempty(load_jsonl(data)?, data)?;
    let eval = run
        .evaluate(&model, &docs)
        .map_err(|e| e.at(data))?;
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    let report = EvaluationReport {
        run: dir.to_path_buf(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        data: data.to_path_buf(),
        n_docs: docs.len(),
        auc: eval.auc,
        accuracy: eval.accuracy,
        loss: eval.loss,
    };
    save_json(&report, &out.join("metrics.json"))?;
    save_roc_csv(&eval.roc, &out.join("roc.csv"))?;
    Ok(report)
}
