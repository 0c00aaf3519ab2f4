use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed row, expected {expected} fields but found {found}")]
    MalformedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: unknown label {label:?} (no taxonomy entry)")]
    UnknownLabel { line: u64, label: String },

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid fraction {0}: must lie strictly between 0 and 1")]
    InvalidFraction(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {row}, column {col}: non-numeric value {value:?}")]
    NonNumericValue {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("optimizer state is not initialized for these parameters: {0}")]
    UninitializedState(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class index {class} out of range for {k} classes")]
    OutOfRangeClass { class: usize, k: usize },

    #[error("class {class} is degenerate: {positives} positives, {negatives} negatives")]
    DegenerateClass {
        class: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("numeric divergence at epoch {epoch}, batch {batch}: loss = {loss}")]
    NumericDivergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("schema mismatch: artifact expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported artifact version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input files, flags or configuration, as
    /// opposed to internal failures or numeric divergence.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NumericDivergence { .. } | Error::StaleCache(_) | Error::Serialization(_)
        )
    }
}
