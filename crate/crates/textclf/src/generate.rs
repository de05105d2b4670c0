use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use textclf_core::corpus::{generate_split, SyntheticSpec};

use crate::error::CliError;
use crate::formats::{save_json, save_jsonl};

pub const SPLITS: [&str; 3] = ["train", "test", "validation"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Spec of the train and test splits.
    pub spec: SyntheticSpec,
    /// The validation split uses `spec` with this marker shift.
    pub validation_shift: f64,
    pub files: Vec<PathBuf>,
    pub counts: Vec<usize>,
}

/// Writes `train.jsonl`, `test.jsonl`, `validation.jsonl` and
/// `manifest.json` into `out`.
pub fn generate(
    spec: &SyntheticSpec,
    validation_shift: f64,
    out: &Path,
) -> Result<Manifest, CliError> {
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let shifted = SyntheticSpec {
        shift: validation_shift,
        ..spec.clone()
    };
    shifted
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    let mut files = Vec::new();
    let mut counts = Vec::new();
    for (split, name) in SPLITS.iter().enumerate() {
        let s = if *name == "validation" {
            &shifted
        } else {
            spec
        };
        let docs = generate_split(s, split as u64).map_err(|e| CliError::usage(e.to_string()))?;
        let path = out.join(format!("{name}.jsonl"));
        save_jsonl(&docs, &path)?;
        counts.push(docs.len());
        files.push(path);
    }
    let manifest = Manifest {
        spec: spec.clone(),
        validation_shift,
        files,
        counts,
    };
    save_json(&manifest, &out.join("manifest.json"))?;
    Ok(manifest)
}
