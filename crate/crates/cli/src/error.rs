use std::path::PathBuf;

use serde_json::json;
use strandforge_core::bench::BenchError;
use strandforge_core::cfg::CfgError;
use strandforge_core::corpus::CorpusError;
use strandforge_core::neural::NeuralError;
use strandforge_core::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: bad or missing field `{field}`")]
    Schema { line: usize, field: String },
    #[error("line {line}: {source}")]
    Cfg { line: usize, source: CfgError },
    #[error("line {line}: {detail}")]
    Json { line: usize, detail: String },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {0}; run the producing subcommand first")]
    MissingInput(PathBuf),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Schema { .. } => "schema",
            CliError::Cfg { .. } => "parse",
            CliError::Json { .. } => "json",
            CliError::Checkpoint { .. } => "checkpoint",
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing-input",
            CliError::Tokenizer(_) => "tokenizer",
            CliError::Corpus(_) => "corpus",
            CliError::Neural(_) => "neural",
            CliError::Bench(BenchError::InsufficientData { .. }) => "insufficient-data",
            CliError::Bench(_) => "bench",
            CliError::Usage(_) => "usage",
        }
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Schema { line, field } => {
                v["line"] = json!(line);
                v["field"] = json!(field);
            }
            CliError::Cfg { line, .. } | CliError::Json { line, .. } => v["line"] = json!(line),
            CliError::Bench(BenchError::InsufficientData { task, needed, found }) => {
                v["task"] = json!(task);
                v["needed"] = json!(needed);
                v["found"] = json!(found);
            }
            _ => {}
        }
        v.to_string()
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
