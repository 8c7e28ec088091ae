use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScganError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid domain key {0:?}: must be one-hot of length 2")]
    InvalidKey(Vec<f64>),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<ScganError>,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint config digest mismatch: file {found}, config {expected}")]
    DigestMismatch { found: String, expected: String },

    #[error("dataset error at record {record}: {reason}")]
    DatasetRecord { record: usize, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("evaluation labels are not available for the target domain")]
    MissingEvalLabels,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl ScganError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScganError::Io { path: path.into(), source }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        ScganError::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn at_step(self, step: u64) -> Self {
        ScganError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, ScganError>;
