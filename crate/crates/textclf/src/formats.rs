//! On-disk formats: JSON-lines datasets, the vocabulary TSV, checkpoints,
//! JSON and TOML documents and CSV exports.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use textclf_core::corpus::{Document, Vocabulary, FIRST_WORD_INDEX};
use textclf_core::metrics::RocPoint;
use textclf_core::tensor::Checkpoint;
use textclf_core::train::EpochRecord;

use crate::error::CliError;

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: i64,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    text: &'a str,
    label: u8,
}

/// Reads one document per non-blank line. Errors name the 1-based line.
pub fn load_jsonl(path: &Path) -> Result<Vec<Document>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::read(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::read(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| CliError::data(format!("{}:{}: {msg}", path.display(), i + 1));
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        docs.push(Document::new(raw.text, raw.label).map_err(|e| at(e.to_string()))?);
    }
    Ok(docs)
}

pub fn save_jsonl(docs: &[Document], path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    for d in docs {
        let rec = RecordRef {
            text: &d.text,
            label: d.label,
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| CliError::write(path, e))?;
        out.write_all(b"\n").map_err(|e| CliError::write(path, e))?;
    }
    out.flush().map_err(|e| CliError::write(path, e))
}

/// `word<TAB>index` lines in index order.
pub fn save_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    for (word, index) in vocab.entries() {
        writeln!(out, "{word}\t{index}").map_err(|e| CliError::write(path, e))?;
    }
    out.flush().map_err(|e| CliError::write(path, e))
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let at = |msg: &str| CliError::data(format!("{}:{}: {msg}", path.display(), i + 1));
        let (word, index) = line
            .split_once('\t')
            .ok_or_else(|| at("expected word<TAB>index"))?;
        let index: usize = index
            .trim()
            .parse()
            .map_err(|_| at("index is not an integer"))?;
        if index != words.len() + FIRST_WORD_INDEX {
            return Err(at("indices must run contiguously from 2"));
        }
        words.push(word.to_string());
    }
    Vocabulary::from_words(words).map_err(|e| CliError::read(path, e))
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CliError> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| CliError::write(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::read(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| CliError::read(path, e))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::read(path, e))
}

pub fn save_toml<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = toml::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::read(path, e))
}

/// Header `threshold,fpr,tpr`; the first row's threshold is `inf`.
pub fn save_roc_csv(points: &[RocPoint], path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["threshold", "fpr", "tpr"])
        .map_err(|e| CliError::write(path, e))?;
    for p in points {
        w.serialize((p.threshold, p.fpr, p.tpr))
            .map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Per-epoch training loss, accuracy and seconds.
pub fn save_curve_csv(epochs: &[EpochRecord], path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "loss", "accuracy", "seconds"])
        .map_err(|e| CliError::write(path, e))?;
    for e in epochs {
        w.serialize((e.epoch, e.loss, e.accuracy, e.seconds))
            .map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::write(path, e))
}
