use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the zero threshold")]
    ZeroVector { norm: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid temperature {0}: must be positive and finite")]
    InvalidTemperature(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("condition directions cancel: |x + sum r| = {norm:e}")]
    DegenerateDirection { norm: f64 },
    #[error("{conditions} conditions do not span a proper subspace of dimension {dim}")]
    TooManyConditions { conditions: usize, dim: usize },
    #[error("direction weights are all zero")]
    ZeroWeights,
    #[error("expected {expected} direction weights, got {got}")]
    WeightCount { expected: usize, got: usize },

    #[error("category set is empty")]
    EmptyCategorySet,
    #[error("missing prompt embedding for category {category:?} and rationale {rationale:?}")]
    MissingPromptEmbedding { category: String, rationale: String },

    #[error("need {needed} rationales but only {available} are available")]
    InsufficientRationales { needed: usize, available: usize },
    #[error("exhaustive search over {candidates} subsets exceeds the limit of {limit}")]
    InstanceTooLarge { candidates: u128, limit: u128 },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),

    #[error("image {0:?} has no ground-truth rationales")]
    EmptyGroundTruth(String),
    #[error("need {needed} distinct rationales among ranked pairs, found {found}")]
    InsufficientPairs { needed: usize, found: usize },
    #[error("unknown image id {0:?}")]
    UnknownImageId(String),

    #[error("{path}: bad magic bytes")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    VersionUnsupported { path: PathBuf, version: u8 },
    #[error("{path}: unknown role tag {tag}")]
    UnknownRole { path: PathBuf, tag: u8 },
    #[error("{path}: file truncated")]
    TruncatedFile { path: PathBuf },
    #[error("{path}: {extra} unexpected trailing bytes")]
    TrailingBytes { path: PathBuf, extra: usize },
    #[error("{path}: entry name is not valid UTF-8")]
    BadName { path: PathBuf },
    #[error("store role mismatch: expected {expected}, found {found}")]
    RoleMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("manifest line {line}: {message}")]
    BadManifest { line: usize, message: String },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by degenerate numeric inputs rather than bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::ZeroVector { .. }
                | Error::DegenerateDirection { .. }
                | Error::NonFinite(_)
                | Error::ZeroWeights
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
