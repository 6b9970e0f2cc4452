use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: line {line}: missing required field `{field}`")]
    Schema {
        path: String,
        line: usize,
        field: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("question {question:?} refers to unknown specification {spec:?}")]
    ReferentialIntegrity { question: String, spec: String },

    #[error("unknown product {0:?}")]
    UnknownProduct(String),

    #[error("unsupported checkpoint version: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("shape mismatch for tensor {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("transfer error: {0}")]
    Transfer(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    ///
    /// 1 runtime/numeric, 2 input/format, 3 config/shape.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Schema { .. }
            | Error::Version { .. }
            | Error::Corruption(_)
            | Error::ReferentialIntegrity { .. }
            | Error::UnknownProduct(_) => 2,
            Error::Config(_)
            | Error::ShapeMismatch { .. }
            | Error::Transfer(_)
            | Error::Dimension { .. } => 3,
            Error::EmptyInput(_)
            | Error::Numeric(_)
            | Error::InsufficientData(_)
            | Error::DuplicateParameter(_) => 1,
        }
    }
}
