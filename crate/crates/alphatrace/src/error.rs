use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column '{0}'")]
    MissingColumn(String),

    #[error("row {row}: unparseable {field}: '{value}'")]
    BadField {
        row: usize,
        field: String,
        value: String,
    },

    #[error("duplicate key ({asset}, {date})")]
    DuplicateKey { asset: String, date: String },

    #[error("empty universe after filtering")]
    EmptyUniverse,

    #[error("empty partition '{0}' in split")]
    EmptyPartition(&'static str),

    #[error("invalid split config: {0}")]
    BadSplit(String),

    #[error("recipe parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("recipe failed validation: {0}")]
    InvalidRecipe(String),

    #[error("insufficient days for t-statistic: have {0}, need at least 2")]
    InsufficientDays(usize),

    #[error("trace integrity failure at seq {seq}: {message}")]
    TraceIntegrity { seq: u64, message: String },

    #[error("trace append rejected: {0}")]
    TraceAppend(String),

    #[error("corrupt trace: {0}")]
    CorruptTrace(String),

    #[error("protocol frozen: {0}")]
    ProtocolFrozen(String),

    #[error("agent '{name}' failed: {message}")]
    Agent { name: String, message: String },

    #[error("ridge system is singular at lambda = 0; set lambda > 0")]
    SingularRidge,

    #[error("ridge fit needs at least {need} complete rows, have {have}")]
    TooFewRows { need: usize, have: usize },

    #[error("factor name order mismatch between model and matrix")]
    FactorOrderMismatch,

    #[error("too few observations for portfolio metrics: {0} < 30")]
    TooFewObservations(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
