//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

use crate::dataset::{DimensionId, SourceDataset};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: no valid records")]
    NoValidRecords { path: PathBuf },

    #[error("no canonical equivalent for dimension {name:?} in {dataset}")]
    UnmappedDimension {
        dataset: SourceDataset,
        name: String,
    },

    #[error("rating {value} outside [{min}, {max}]")]
    RatingOutOfRange { value: i64, min: u8, max: u8 },

    #[error("empty rating multiset")]
    EmptyMultiset,

    #[error("insufficient repeats: need at least {needed} ratings, got {got}")]
    InsufficientRepeats { needed: usize, got: usize },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("modes adjacent: center {center} and second {second} must differ by at least 2")]
    AdjacentModes { center: u8, second: u8 },

    #[error("mixture weight must lie in (0, 1), got {0}")]
    InvalidWeight(f64),

    #[error("missing prediction for ({situation_id}, {dimension})")]
    MissingPrediction {
        situation_id: String,
        dimension: DimensionId,
    },

    #[error("dimension {0} absent from training data")]
    DimensionNotInTraining(DimensionId),

    #[error("incomplete profile: missing {missing}")]
    IncompleteProfile { missing: &'static str },

    #[error("prompt variant {variant} requires profile data that is not present")]
    VariantRequiresProfile { variant: &'static str },

    #[error("unparseable reply: {0:?}")]
    UnparseableReply(String),

    #[error("{failed} of {total} replies unparseable, item aborted")]
    TooManyParseFailures { failed: usize, total: usize },

    #[error("endpoint error: {message}")]
    Endpoint {
        status: Option<u16>,
        message: String,
    },

    #[error("confidence scores sum to zero")]
    AllZeroConfidence,

    #[error("no samples provided")]
    EmptySamples,

    #[error("ranking {0:?} is not a permutation of 1..=5")]
    NotAPermutation(Vec<u8>),

    #[error("degenerate variance: both samples are constant")]
    DegenerateVariance,

    #[error("constant input: correlation undefined")]
    ConstantInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown grouping field {0:?}")]
    UnknownGroupField(String),

    #[error("k = {k} exceeds the {have} dimensions in the report")]
    KExceedsDimensions { k: usize, have: usize },

    #[error("stage {stage} requires missing artifact {path} (produced by {produced_by})")]
    MissingArtifact {
        stage: &'static str,
        path: PathBuf,
        produced_by: &'static str,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Process exit code: 1 config error, 2 data error, 3 endpoint error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Endpoint { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
