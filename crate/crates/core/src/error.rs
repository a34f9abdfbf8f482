use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: no tokens on a non-blank line")]
    EmptyLine { path: PathBuf, line: usize },

    #[error("invalid token {token:?}: {reason}")]
    InvalidToken { token: String, reason: &'static str },

    #[error("query {query}: token {token:?} contains the reserved separator U+241F")]
    ReservedSeparator { query: usize, token: String },

    #[error("malformed dataset: {0}")]
    Json(#[from] serde_json::Error),

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("record {record}: unknown split key {key:?}")]
    UnknownSplitKey { record: usize, key: String },

    #[error("unterminated double quote at offset {offset}")]
    UnterminatedQuote { offset: usize },

    #[error("unbalanced parentheses at token {index}")]
    UnbalancedParens { index: usize },

    #[error("cannot parse an empty token sequence")]
    EmptyInput,

    #[error("span ({start}, {end}) out of bounds for {leaf_count} leaves")]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        leaf_count: usize,
    },

    #[error("ast mode requires parse trees for {0} corpus")]
    MissingTrees(&'static str),

    #[error("{corpus} corpus has {queries} queries but {trees} trees were supplied")]
    TreeCountMismatch {
        corpus: &'static str,
        queries: usize,
        trees: usize,
    },

    #[error("tree for query {query} covers {leaves} leaves but the query has {tokens} tokens")]
    TreeShapeMismatch {
        query: usize,
        leaves: usize,
        tokens: usize,
    },

    #[error("token {0:?} is not derivable from the merge table")]
    Underivable(String),

    #[error("unsupported merge table version {0:?}")]
    Version(String),

    #[error("merge table line {line}: {message}")]
    MalformedTable { line: usize, message: String },

    #[error("invalid merge table: {0}")]
    InvalidTable(String),

    #[error("corpora have different query counts ({before} vs {after})")]
    LengthMismatch { before: usize, after: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
