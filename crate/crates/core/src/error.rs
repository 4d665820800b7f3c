//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ingest
    #[error("malformed recording filename `{0}`: {1}")]
    MalformedName(String, String),
    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("conflicting diagnosis for patient {patient}: `{first}` vs `{second}`")]
    ConflictingDiagnosis { patient: u32, first: String, second: String },
    #[error("audio file without annotation file: {0}")]
    MissingAnnotation(PathBuf),
    #[error("unsupported or corrupt WAV file {path}: {msg}")]
    BadWav { path: PathBuf, msg: String },

    // preprocess
    #[error("invalid band [{low}, {high}] Hz for fs {fs} Hz")]
    InvalidBand { low: f64, high: f64, fs: f64 },
    #[error("sample rate mismatch: signal at {got} Hz, filter designed for {expected} Hz")]
    SampleRateMismatch { got: f64, expected: f64 },

    // emd
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("envelope needs at least 2 extrema, got {0}")]
    InsufficientExtrema(usize),
    #[error("IMF set is empty")]
    EmptyImfSet,

    // scalogram
    #[error("length mismatch: signal has {got} samples, filter bank built for {expected}")]
    LengthMismatch { got: usize, expected: usize },

    // render
    #[error("matrix too small to resize: {rows}x{cols}, need at least 2x2")]
    TooSmall { rows: usize, cols: usize },
    #[error("bad colormap table: {0}")]
    BadColormap(String),

    // dataset
    #[error("disease class excluded from the study: {0}")]
    ExcludedClass(String),
    #[error("manifest contains no images")]
    EmptyManifest,
    #[error("batch size {batch} is not divisible by {classes} classes")]
    IndivisibleBatch { batch: usize, classes: usize },

    // nn
    #[error("unsupported class count {0} (expected 3 or 6)")]
    BadClassCount(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a train-mode forward cache")]
    MissingCache,
    #[error("bad checkpoint {path}: {msg}")]
    BadCheckpoint { path: PathBuf, msg: String },

    // metrics
    #[error("label {got} out of range for {classes} classes")]
    LabelOutOfRange { got: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,

    // config / plumbing
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Attach a human-readable context to an I/O error.
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// Attach a human-readable context to a JSON error.
    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    /// True for errors caused by the data on disk rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedName(..)
                | Error::Parse { .. }
                | Error::ConflictingDiagnosis { .. }
                | Error::MissingAnnotation(..)
                | Error::BadWav { .. }
                | Error::BadCheckpoint { .. }
                | Error::EmptyManifest
                | Error::Io { .. }
        )
    }
}
