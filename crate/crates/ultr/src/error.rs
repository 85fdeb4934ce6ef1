use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no training pairs: no session has both a clicked and an unclicked document")]
    NoTrainingPairs,

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("feature count mismatch: model expects {model} features, data has {data}")]
    FeatureMismatch { model: usize, data: usize },

    #[error("click log session {session}: unknown query id `{qid}`")]
    UnknownQuery { session: usize, qid: String },

    #[error("click log session {session}: doc index {doc} out of range for query `{qid}` ({len} docs)")]
    DanglingDocRef {
        session: usize,
        qid: String,
        doc: usize,
        len: usize,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
