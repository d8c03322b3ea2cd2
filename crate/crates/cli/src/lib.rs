//! Pipeline commands and the file-based model store behind the `ueba` binary.

mod commands;
mod config;
mod io;
mod store;

pub use commands::{
    cmd_diagnose, cmd_featurize, cmd_score, cmd_stress, cmd_synth, cmd_train, cmd_verify, DiagnoseSummary,
    FeaturizeSummary, ScoreInput, ScoreSummary, StressSummary, SynthSummary, TrainSummary, VerifySummary,
};
pub use config::{DiagnoseSection, PipelineConfig, StressSection, SynthSection, UnmappedPolicy};
pub use io::{
    read_matrix_csv, read_roles, read_stress_csv, read_windows_csv, write_matrix_csv, write_stress_csv,
    write_windows_csv, KEY_COLUMNS,
};
pub use store::{ModelStore, StoreMetadata, MANIFEST_FILE};

use std::path::{Path, PathBuf};
use thiserror::Error;
use ueba_core::autoencoder::AutoencoderError;
use ueba_core::doc2vec::Doc2VecError;
use ueba_core::eval::EvalError;
use ueba_core::features::FeatureError;
use ueba_core::nn::NnError;
use ueba_core::synth::SynthError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Schema { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("no model in {}", .0.display())]
    MissingModel(PathBuf),
    #[error("store file {file} does not match its recorded hash")]
    HashMismatch { file: String },
    #[error("store: {0}")]
    Store(String),
    #[error("no {role} windows in the input")]
    NoWindows { role: String },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Doc2Vec(#[from] Doc2VecError),
    #[error(transparent)]
    Autoencoder(#[from] AutoencoderError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// Stable machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Schema { .. } => "schema",
            CliError::Config(_) => "config",
            CliError::MissingModel(_) => "missing_model",
            CliError::HashMismatch { .. } => "hash_mismatch",
            CliError::Store(_) => "store",
            CliError::NoWindows { .. } => "no_windows",
            CliError::Features(_) => "features",
            CliError::Doc2Vec(_) => "doc2vec",
            CliError::Autoencoder(_) => "autoencoder",
            CliError::Network(_) => "network",
            CliError::Synth(_) => "synth",
            CliError::Eval(_) => "eval",
        }
    }

    /// `{"error": kind, "message": text}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable value");
    s.push('\n');
    s
}
