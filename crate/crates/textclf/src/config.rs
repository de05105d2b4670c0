//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags. The resolved result is written into
//! every run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use textclf_core::train::TrainConfig;
use textclf_core::zoo::{BaselineConfig, Hyperparameters, ModelId};

use crate::error::CliError;
use crate::formats::load_toml;

/// Nearest-rank percentile of training-document lengths used as `max_len`.
pub const DEFAULT_MAX_LEN_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelId>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_len_percentile: f64,
    /// Fixed encoded length; overrides `max_len_percentile` when set.
    pub max_len: Option<usize>,
    /// Embedding width; the fourth-root rule when unset.
    pub embedding_dim: Option<usize>,
    pub hyper: Hyperparameters,
    pub training: TrainConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            train: None,
            test: None,
            validation: None,
            out: None,
            max_len_percentile: DEFAULT_MAX_LEN_PERCENTILE,
            max_len: None,
            embedding_dim: None,
            hyper: Hyperparameters::default(),
            training: TrainConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// Flag values; `None` leaves the configured value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<ModelId>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed_init: Option<u64>,
    pub seed_stochastic: Option<u64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub stop_delta: Option<f64>,
    pub stop_patience: Option<usize>,
}

/// A configuration whose required fields are present.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelId,
    pub train: PathBuf,
    pub test: PathBuf,
    pub validation: Option<PathBuf>,
    pub out: PathBuf,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        load_toml(path).map_err(|e| CliError::usage(e.message))
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set_opt(&mut self.model, &o.model);
        set_opt(&mut self.train, &o.train);
        set_opt(&mut self.test, &o.test);
        set_opt(&mut self.validation, &o.validation);
        set_opt(&mut self.out, &o.out);
        let t = &mut self.training;
        set(&mut t.seed_init, &o.seed_init);
        set(&mut t.seed_stochastic, &o.seed_stochastic);
        set(&mut t.max_epochs, &o.max_epochs);
        set(&mut t.batch_size, &o.batch_size);
        set(&mut t.learning_rate, &o.learning_rate);
        set(&mut t.stop_min_delta, &o.stop_delta);
        set(&mut t.stop_patience, &o.stop_patience);
    }

    /// Checks required fields and value ranges.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let model = self
            .model
            .ok_or_else(|| CliError::usage("no model given (--model)"))?;
        let train = self
            .train
            .clone()
            .ok_or_else(|| CliError::usage("no training data given (--train)"))?;
        let test = self
            .test
            .clone()
            .ok_or_else(|| CliError::usage("no test data given (--test)"))?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(model.as_str()));
        self.training
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.max_len_percentile > 0.0 && self.max_len_percentile <= 1.0) {
            return Err(CliError::usage("max_len_percentile must lie in (0, 1]"));
        }
        if self.max_len == Some(0) || self.embedding_dim == Some(0) {
            return Err(CliError::usage(
                "max_len and embedding_dim must be positive",
            ));
        }
        Ok(Resolved {
            model,
            train,
            test,
            validation: self.validation.clone(),
            out: out.clone(),
            config: RunConfig {
                out: Some(out),
                ..self
            },
        })
    }
}
