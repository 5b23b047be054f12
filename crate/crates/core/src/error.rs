use std::path::PathBuf;

/// Errors raised anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown fine-grained label `{0}`")]
    UnknownFineLabel(String),

    #[error("unknown binary label `{0}`")]
    UnknownBinaryLabel(String),

    #[error("response does not match `The pair is {{real|fake}} because ...`: {0:?}")]
    UnparseableResponse(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("backend did not return logprobs at the classification position")]
    MissingLogprobs,

    #[error("no fixture recorded for {0}")]
    MissingFixture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("vector contains a non-finite value")]
    NonFiniteVector,

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("non-finite logprob input")]
    NonFiniteInput,

    #[error("fused feature has zero norm")]
    ZeroVector,

    #[error("vector for `{id}` is not unit norm (norm {norm})")]
    NotUnitNorm { id: String, norm: f64 },

    #[error("no index record passes the filter")]
    EmptyPool,

    #[error("explanation index is empty")]
    EmptyIndex,

    #[error("no positive evidence candidate for the inferred label, even after relaxing to the binary label")]
    NoPositivePool,

    #[error("no negative evidence candidate: corpus must contain both binary classes")]
    NoNegativePool,

    #[error("corpus entry `{0}` not found")]
    MissingCorpusEntry(String),

    #[error("validation cache is empty")]
    EmptyCache,

    #[error("predictions and gold labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("no retrieval was triggered")]
    NoRetrievals,

    #[error("invalid lexicon configuration: {0}")]
    InvalidLexicons(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corpus entry `{id}`: {source}")]
    Entry {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_entry(id: &str, source: Error) -> Self {
        Error::Entry {
            id: id.to_string(),
            source: Box::new(source),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
