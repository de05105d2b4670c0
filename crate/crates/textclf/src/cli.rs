use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use textclf_core::corpus::SyntheticSpec;
use textclf_core::zoo::ModelId;

use crate::compare::{compare, format_table};
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::generate::generate;
use crate::pipeline::{evaluate_run, train_run};

/// Text classification with recurrent, convolutional and hybrid networks.
///
/// Exit codes: 0 success, 1 other failure, 2 usage error, 3 data error,
/// 4 numerical failure (training diverged).
#[derive(Debug, Parser)]
#[command(name = "textclf", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train, test and shifted validation splits.
    Generate(GenerateArgs),
    /// Train one model and write its run directory.
    Train(TrainArgs),
    /// Score a trained run on a dataset.
    Evaluate(EvaluateArgs),
    /// Train a grid of models and tabulate their results.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Documents per split.
    #[arg(long, default_value_t = 1000)]
    pub n_docs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 2000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 20)]
    pub markers: usize,
    /// Marker probability in positive documents over the background rate.
    #[arg(long, default_value_t = 10.0)]
    pub lift: f64,
    #[arg(long, default_value_t = 200)]
    pub mean_length: usize,
    #[arg(long, default_value_t = 50)]
    pub length_jitter: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fraction of markers replaced by unseen words in the validation split.
    #[arg(long, default_value_t = 0.5)]
    pub shift: f64,
}

/// Options shared by `train` and every cell of `compare`.
#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub seed_init: Option<u64>,
    #[arg(long)]
    pub seed_stochastic: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Minimum epoch-over-epoch loss drop that counts as improvement
    /// [default: 0.01].
    #[arg(long)]
    pub stop_delta: Option<f64>,
    /// Non-improving epochs that stop training [default: 2].
    #[arg(long)]
    pub stop_patience: Option<usize>,
}

impl RunArgs {
    /// The flags that were given, in command-line form.
    pub fn to_args(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |flag: &str, value: Option<String>| {
            if let Some(x) = value {
                v.push(format!("--{flag}"));
                v.push(x);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("config", path(&self.config));
        push("train", path(&self.train));
        push("test", path(&self.test));
        push("validation", path(&self.validation));
        push("seed-init", self.seed_init.map(|x| x.to_string()));
        push(
            "seed-stochastic",
            self.seed_stochastic.map(|x| x.to_string()),
        );
        push("max-epochs", self.max_epochs.map(|x| x.to_string()));
        push("batch-size", self.batch_size.map(|x| x.to_string()));
        push("learning-rate", self.learning_rate.map(|x| x.to_string()));
        push("stop-delta", self.stop_delta.map(|x| x.to_string()));
        push("stop-patience", self.stop_patience.map(|x| x.to_string()));
        v
    }

    fn overrides(&self, model: Option<ModelId>, out: Option<PathBuf>) -> Overrides {
        Overrides {
            model,
            train: self.train.clone(),
            test: self.test.clone(),
            validation: self.validation.clone(),
            out,
            seed_init: self.seed_init,
            seed_stochastic: self.seed_stochastic,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            stop_delta: self.stop_delta,
            stop_patience: self.stop_patience,
        }
    }
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse()
        .map_err(|e: textclf_core::zoo::ZooError| format!("{e}; expected one of a..l or baseline"))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// One of a..l or baseline.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelId>,
    /// Run directory [default: runs/<model>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint to score instead of the run's selected one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON-lines dataset to score.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory [default: <run>/evaluation].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',', value_parser = parse_model, required = true)]
    pub models: Vec<ModelId>,
    #[arg(long, default_value = "runs/compare")]
    pub out: PathBuf,
    /// Runs to execute at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => {
            let spec = SyntheticSpec {
                n_docs: a.n_docs,
                positive_fraction: a.positive_fraction,
                vocab_size: a.vocab_size,
                n_marker_words: a.markers,
                marker_probability: 0.0,
                mean_length: a.mean_length,
                length_jitter: a.length_jitter,
                seed: a.seed,
                shift: 0.0,
            }
            .with_lift(a.lift);
            let m = generate(&spec, a.shift, &a.out)?;
            for (f, n) in m.files.iter().zip(&m.counts) {
                println!("{}\t{n}", f.display());
            }
        }
        Command::Train(a) => {
            let mut config = load_config(&a.run)?;
            config.apply(&a.run.overrides(a.model, a.out));
            let resolved = config.resolve()?;
            let r = train_run(&resolved)?;
            let val = r
                .validation
                .as_ref()
                .map(|v| format!(" validation_auc {:.4}", v.auc));
            println!(
                "model {} stop_epoch {} selected_epoch {} test_auc {:.4}{} -> {}",
                r.model_id,
                r.stop_epoch,
                r.selected_epoch,
                r.test.auc,
                val.unwrap_or_default(),
                resolved.out.display()
            );
        }
        Command::Evaluate(a) => {
            let out = a.out.unwrap_or_else(|| a.run.join("evaluation"));
            let r = evaluate_run(&a.run, a.checkpoint.as_deref(), &a.data, &out)?;
            println!(
                "auc {:.4} accuracy {:.4} n {} -> {}",
                r.auc,
                r.accuracy,
                r.n_docs,
                out.display()
            );
        }
        Command::Compare(a) => {
            // fail early on a broken shared config rather than once per cell
            load_config(&a.run)?;
            let exe = std::env::current_exe().map_err(|e| CliError::other(e.to_string()))?;
            let rows = compare(&exe, &a.models, &a.run.to_args(), &a.out, a.parallel)?;
            print!("{}", format_table(&rows));
        }
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
