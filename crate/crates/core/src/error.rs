use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a feature file", .0.display())]
    NotAFeatureFile(PathBuf),
    #[error("{}: not a model file", .0.display())]
    NotAModelFile(PathBuf),
    #[error("{}: corrupt: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
    #[error("inconsistent sample count: network {network} has {found} rows, expected {expected}")]
    InconsistentSampleCount {
        network: String,
        expected: usize,
        found: usize,
    },
    #[error("label out of range: {label} with {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class too small: class {class} has {count} samples for {parts} split parts")]
    ClassTooSmall { class: usize, count: usize, parts: usize },
    #[error("sample count mismatch: {0} vs {1}")]
    SampleCountMismatch(usize, usize),
    #[error("no networks")]
    NoNetworks,
    #[error("unknown network {0}")]
    UnknownNetwork(String),
    #[error("degenerate accuracy {accuracy} for {network}")]
    DegenerateAccuracy { network: String, accuracy: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no viable config")]
    NoViableConfig,
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the environment rather than of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv { source, .. } => source.is_io_error(),
            _ => false,
        }
    }
}
