//! File formats, run directories and the `textclf` command line on top of
//! `textclf-core`.

pub mod cli;
pub mod compare;
pub mod config;
pub mod error;
pub mod formats;
pub mod generate;
pub mod pipeline;

pub use error::{CliError, ErrorKind};
