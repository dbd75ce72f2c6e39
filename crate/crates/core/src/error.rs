use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the toolkit.
///
/// Each variant maps onto one of three families used by the command line
/// front end: invalid configuration, bad data, or an internal failure. See
/// [`Error::kind`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid strip pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },

    #[error("degenerate_class: {0}")]
    DegenerateClass(String),

    #[error("too_few_groups: need at least 3 recipients, found {0}")]
    TooFewGroups(usize),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite feature value at example {0}")]
    NonFinite(usize),

    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature space mismatch: {0}")]
    FeatureSpace(String),

    #[error("missing embeddings for {} labeled ids: {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("corrupt_model: {0}")]
    CorruptModel(String),

    #[error("corrupt featurizer file: {0}")]
    CorruptFeaturizer(String),

    #[error("corrupt embedding file: {0}")]
    CorruptEmbeddings(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("absent class {0:?} in truths")]
    AbsentClass(String),

    #[error("example set mismatch between traces: {0}")]
    ExampleSetMismatch(String),

    #[error("split leakage: recipients in multiple splits: {}", .0.join(", "))]
    Leakage(Vec<String>),
}

/// Coarse error family, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Pattern { .. } => ErrorKind::Validation,
            Error::Io { .. } => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }
}
