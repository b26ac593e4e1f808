use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown opcode `{mnemonic}`")]
    UnknownOpcode { line: usize, mnemonic: String },

    #[error("malformed manifest: {0}")]
    Xml(String),

    #[error("binary AXML manifests are not supported; decode the manifest to plain XML first (e.g. with apktool)")]
    AxmlUnsupported,

    #[error("no class could be parsed for app `{0}`")]
    EmptyApp(String),

    #[error("class hierarchy contains a cycle through `{0}`")]
    CyclicHierarchy(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("trace is broken: no invoke of `{expected}` in `{method}`")]
    BrokenTrace { method: String, expected: String },

    #[error("no size-{row_len} opcode rows could be formed")]
    EmptyMatrix { row_len: usize },

    #[error("row length {found} does not match expected {expected}")]
    RowLengthMismatch { expected: usize, found: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("only one class is present")]
    SingleClass,

    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

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

    /// True for errors caused by bad input data rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::DivergedLoss { .. })
    }
}
