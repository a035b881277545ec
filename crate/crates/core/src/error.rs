use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("input is empty")]
    EmptyFile,

    #[error("non-binary value {value:?} at data row {row}, column {column:?}")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("header does not match schema: {0}")]
    HeaderMismatch(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("n_train = {n_train} must satisfy 1 <= n_train < n = {n}")]
    SplitOutOfRange { n_train: usize, n: usize },

    #[error("could not bracket the intercept for base rate {base_rate}")]
    InterceptBracket { base_rate: f64 },

    #[error("response has a single class; both 0 and 1 are required")]
    ConstantResponse,

    #[error("singular working matrix; linearly dependent columns: {columns:?}")]
    SingularMatrix { columns: Vec<String> },

    #[error("dimension mismatch: expected {expected} predictors, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cross-validation fold {fold} lacks one response class")]
    SingleClassFold { fold: usize },

    #[error("fitness returned non-finite value {value} for chromosome {chromosome}")]
    NonFiniteFitness { chromosome: String, value: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost stage name, if this error was raised inside the pipeline.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
