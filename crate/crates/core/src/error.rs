use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no anchors")]
    NoAnchors,

    #[error("unsorted series for {0}")]
    UnsortedSeries(String),

    #[error("empty pool for {0}")]
    EmptyPool(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("bad magic: expected EMB1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("dim mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("truncated payload: {0}")]
    TruncatedPayload(String),

    #[error("id manifest mismatch: {0}")]
    IdManifest(String),

    #[error("missing sentence id {0}")]
    MissingId(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("diverged at step {0}")]
    Diverged(usize),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient design matrix; use a ridge penalty > 0")]
    RankDeficient,

    #[error("schema mismatch at column {0}")]
    SchemaMismatch(String),

    #[error("no usable rows: {0}")]
    NoUsableRows(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Short stable identifier, used for machine-parsable CLI errors and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::NoAnchors => "no_anchors",
            Error::UnsortedSeries(_) => "unsorted_series",
            Error::EmptyPool(_) => "empty_pool",
            Error::EmptyCorpus => "empty_corpus",
            Error::BadMagic(_) => "bad_magic",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::TruncatedPayload(_) => "truncated_payload",
            Error::IdManifest(_) => "id_manifest",
            Error::MissingId(_) => "missing_id",
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged(_) => "diverged",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::RankDeficient => "rank_deficient",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::NoUsableRows(_) => "no_usable_rows",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
