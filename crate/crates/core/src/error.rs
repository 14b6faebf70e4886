use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // numerics
    #[error("cannot normalize a zero vector (norm {norm:e})")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("non-finite value: {0}")]
    NonFinite(String),

    // alignment
    #[error("cost matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("invalid cost entry {value} at ({row}, {col}); entries must be finite and non-negative")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("path cell ({0}, {1}) lies outside the cost matrix")]
    PathMismatch(usize, usize),

    // losses
    #[error("row {0} has an empty positive set")]
    EmptyPositiveSet(usize),
    #[error("row {row} is not unit-norm (norm {norm})")]
    RowNotNormalized { row: usize, norm: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample {0} has no child texts")]
    EmptyChildSequence(usize),

    // encoders
    #[error("bad layer dimensions: {0}")]
    BadDims(String),
    #[error("forward cache does not belong to these parameters")]
    MissingCache,

    // datagen
    #[error("infeasible procedure spec: {0}")]
    InfeasibleSpec(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    // textaug
    #[error("cannot generate edit candidates for an empty word")]
    EmptyWord,
    #[error("augmenter client failed for {context:?}: {message}")]
    ClientFailure { context: String, message: String },
    #[error("step corpus is empty")]
    EmptyCorpus,

    // evalkit
    #[error("k = {k} exceeds corpus size {corpus}")]
    KExceedsCorpus { k: usize, corpus: usize },
    #[error("mean embedding is degenerate (norm {0:e})")]
    DegenerateMean(f64),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embedding set is empty")]
    EmptySet,

    // trainer
    #[error("schedule counts are all zero")]
    AllZeroSchedule,
    #[error("dataset has no {0}-level samples")]
    MissingLevelData(String),
    #[error("non-finite loss {value} at step {step} ({level})")]
    NonFiniteLoss { step: u64, level: String, value: f64 },

    // config / io
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while doing work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::ParseError { .. }
                | Error::UnknownKey(_)
                | Error::BadDims(_)
                | Error::InfeasibleSpec(_)
                | Error::AllZeroSchedule
                | Error::NonPositiveTemperature(_)
                | Error::EmptyMatrix
                | Error::InvalidCost { .. }
                | Error::EmptyWord
        )
    }
}
