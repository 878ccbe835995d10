use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed CWE id: {0:?}")]
    MalformedCweId(String),

    #[error("severity score {0} outside [0.0, 10.0]")]
    ScoreOutOfRange(f64),

    #[error("severity score is the decline sentinel (-1)")]
    SentinelScore,

    #[error("label {label} is not defined for CVSS {version}")]
    LabelNotInScheme { label: String, version: String },

    #[error("unknown CVSS version {0:?}")]
    UnknownCvssVersion(String),

    #[error("unknown severity label {0:?}")]
    UnknownLabel(String),

    #[error("invalid CVSS scheme: {0}")]
    InvalidScheme(String),

    #[error("malformed NVD feed: {0}")]
    FeedSyntax(String),

    #[error("fetch failed for {url}: {reason}")]
    Fetch { url: String, reason: String },

    #[error("not a commit url: {0}")]
    NotACommitUrl(String),

    #[error("rate limited by commit host (retry after {retry_after_secs:?}s)")]
    RateLimited { retry_after_secs: Option<u64> },

    #[error("diff syntax error at line {line}: {reason}")]
    DiffSyntax { line: usize, reason: String },

    #[error("cannot sample {requested} records out of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("syntax tree could not be built for {0}")]
    ParseFailure(String),

    #[error("no ground truth for {0}")]
    MissingCve(String),

    #[error("{0}: ground truth lists no usable CWE")]
    EmptyCwe(String),

    #[error("{cve}: no severity for CVSS {version}")]
    MissingSeverityForVersion { cve: String, version: String },

    #[error("{cve}: variant {variant} has no code payload")]
    MissingGranularity { cve: String, variant: String },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("provider timed out after {0} ms")]
    Timeout(u128),

    #[error("format violation: {0}")]
    FormatViolation(String),

    #[error("evaluation set is empty")]
    EmptyEvaluationSet,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            Error::RateLimited { .. } | Error::Timeout(_) | Error::Fetch { .. }
        )
    }
}
