use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unrecognised label `{value}`")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("duplicate pair_id `{0}`")]
    DuplicatePairId(String),
    #[error("entity list {0} contains no usable entries")]
    EmptyList(PathBuf),
    #[error("sentiment provider `{provider}` failed on snippet {snippet:?}: {reason}")]
    ProviderFailure {
        provider: String,
        snippet: String,
        reason: String,
    },
    #[error("lexicon line {line}: {reason}")]
    BadLexicon { line: usize, reason: String },
    #[error("embeddings file has bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("embedding `{id}` has dimension {found}, expected {expected}")]
    DimMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("no embedding for comment `{0}`")]
    MissingId(String),
    #[error("split ratios {0:?} do not sum to 1")]
    BadRatios([f64; 3]),
    #[error("softmax group {0} is empty")]
    EmptyGroup(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("loss diverged at epoch {epoch}: {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("checkpoint schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("class index {0} out of range")]
    BadClass(usize),
    #[error("no attention records")]
    EmptyRecords,
    #[error("histogram needs at least one bin")]
    BadBins,
    #[error("category references unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("no categories given")]
    EmptyCategories,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::MissingColumn(_) => "MissingColumn",
            Error::BadLabel { .. } => "BadLabel",
            Error::BadRow { .. } => "BadRow",
            Error::DuplicatePairId(_) => "DuplicatePairId",
            Error::EmptyList(_) => "EmptyList",
            Error::ProviderFailure { .. } => "ProviderFailure",
            Error::BadLexicon { .. } => "BadLexicon",
            Error::BadMagic(_) => "BadMagic",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::MissingId(_) => "MissingId",
            Error::BadRatios(_) => "BadRatios",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::BadRate(_) => "BadRate",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyTrainSet => "EmptyTrainSet",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::BadClass(_) => "BadClass",
            Error::EmptyRecords => "EmptyRecords",
            Error::BadBins => "BadBins",
            Error::UnknownEntity(_) => "UnknownEntity",
            Error::EmptyCategories => "EmptyCategories",
        }
    }
}
