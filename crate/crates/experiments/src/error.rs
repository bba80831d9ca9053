use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Bad or inconsistent configuration, caught before any training.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] dropcurve_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed metrics file {path}: {message}")]
    Metrics { path: PathBuf, message: String },

    /// Seed files of one summary disagree on their evaluation steps.
    #[error("evaluation steps differ from {reference}: {}", offending.join(", "))]
    Alignment { reference: String, offending: Vec<String> },

    #[error("boost is undefined when dropout yields no improvement (delta_dropout = 0)")]
    UndefinedBoost,

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("training diverged: non-finite loss at step {step} of seed {seed} ({method})")]
    NonFiniteLoss { method: String, seed: u64, step: u64 },
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for problems with the request itself, 2 for
    /// failures while carrying it out.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Parse { .. } | Self::Alignment { .. } | Self::UndefinedBoost => 1,
            Self::Core(dropcurve_core::Error::Input(_) | dropcurve_core::Error::Dimension(_)) => 1,
            _ => 2,
        }
    }
}
