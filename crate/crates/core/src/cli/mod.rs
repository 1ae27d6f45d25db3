//! Experiment runner: configuration files, per-kind orchestration, CSV and
//! summary output, and the standalone lemma validators.

pub mod config;
pub mod csv;
pub mod lemmas;
pub mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use csv::{emit_csv, render_csv, Trace};
pub use runner::{run_experiment, write_run, RunOutput, RunSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Run(#[from] crate::RvlError),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("refusing to write an empty trace")]
    EmptyTrace,
}
