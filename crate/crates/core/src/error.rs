use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("title is empty after normalization")]
    EmptyTitle,

    #[error("invalid skill id {0:?}")]
    InvalidSkill(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector for {id:?} has length {found}, header declares {expected}")]
    VectorLength { id: String, expected: usize, found: usize },

    #[error("duplicate title id {0:?}")]
    DuplicateId(String),

    #[error("zero vector for {0:?}")]
    ZeroVector(String),

    #[error("vector for {id:?} has norm {norm}, too far from 1 to renormalize")]
    NotUnitNorm { id: String, norm: f64 },

    #[error("missing header line")]
    MissingHeader,

    #[error("header declares {expected} records, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("no embedding for title {0:?}")]
    MissingEmbedding(String),

    #[error("skill {0:?} is not in the model's skill order")]
    UnknownSkill(String),

    #[error("duplicate skill {0:?}")]
    DuplicateSkill(String),

    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt checkpoint at skill {skill:?}: {message}")]
    CorruptCheckpoint { skill: String, message: String },

    #[error("non-finite parameter for skill {0:?}")]
    NonFinite(String),

    #[error("relevant skill set is empty")]
    EmptyRelevant,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("title {title:?}: {source}")]
    Title {
        title: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_title(title: impl Into<String>, source: Error) -> Self {
        Error::Title {
            title: title.into(),
            source: Box::new(source),
        }
    }
}
