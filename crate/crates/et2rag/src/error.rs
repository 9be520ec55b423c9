use thiserror::Error;

/// Errors surfaced by the engine.
///
/// `exit_code` maps each variant onto the CLI convention:
/// 1 for user/input problems, 2 for backend problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid query {id}: {reason}")]
    InvalidQuery { id: String, reason: String },

    #[error("duplicate document id {0} during ingest")]
    DuplicateDocId(String),

    #[error("cannot ingest an empty corpus")]
    EmptyCorpus,

    #[error("corpus line {line}: {reason}")]
    CorpusFormat { line: usize, reason: String },

    #[error("retrieval over an empty index")]
    EmptyIndex,

    #[error("index file {path}: {reason}")]
    IndexFormat { path: String, reason: String },

    #[error("insufficient documents for {strategy}: need {needed}, have {available}")]
    InsufficientDocuments {
        strategy: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid organization strategy: {0}")]
    InvalidStrategy(String),

    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),

    #[error("no scripted response for query {query_id} with documents {doc_ids:?}")]
    MissingScript {
        query_id: String,
        doc_ids: Vec<String>,
    },

    #[error("backend failure for subset {subset_index}: {reason}")]
    Backend { subset_index: usize, reason: String },

    #[error("http request to {url} failed: {reason}")]
    Http { url: String, reason: String },

    #[error("malformed response from {url}: {reason}; payload: {payload}")]
    MalformedResponse {
        url: String,
        reason: String,
        payload: String,
    },

    #[error("all {attempted} candidate generations failed; first error: {first}")]
    NoCandidates { attempted: usize, first: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// CLI exit code: 1 user/input error, 2 backend error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend { .. }
            | Error::Http { .. }
            | Error::MalformedResponse { .. }
            | Error::NoCandidates { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
