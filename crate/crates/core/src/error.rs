use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("format error on line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("unknown {kind} `{label}`")]
    UnknownLabel { kind: &'static str, label: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("incompatible artifact: {0}")]
    Version(String),
    #[error("training diverged at step {step}: non-finite loss")]
    NonFiniteLoss { step: usize },
    #[error("internal: {0}")]
    Internal(String),
    #[error(transparent)]
    Tensor(#[from] gt_autodiff::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Process exit statuses used by the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

impl Error {
    /// Usage problems (bad flags, missing files) map to 1, problems with
    /// the data or artifacts to 2 and everything else to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::USAGE,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::USAGE,
            Error::Parse { .. }
            | Error::Semantic(_)
            | Error::Format { .. }
            | Error::Graph(_)
            | Error::UnknownLabel { .. }
            | Error::Data(_)
            | Error::Version(_)
            | Error::Json(_)
            | Error::Io { .. } => exit::DATA,
            Error::NonFiniteLoss { .. } | Error::Internal(_) | Error::Tensor(_) => exit::INTERNAL,
        }
    }
}
