use thiserror::Error;

pub type Result<T> = std::result::Result<T, SssaError>;

#[derive(Debug, Error)]
pub enum SssaError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("column {0} has no observed entries")]
    EmptyColumn(usize),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot auto-scale lambdas: all column pairs are orthogonal; supply lambda explicitly")]
    CannotAutoScale,

    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<SssaError>,
    },

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<SssaError>,
    },

    #[error("label vectors differ in length ({0} vs {1})")]
    LabelLength(usize, usize),

    #[error("ground truth has zero Frobenius norm")]
    ZeroNormTruth,

    #[error("unknown {kind} '{name}' (available: {available})")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SssaError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SssaError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Coarse failure classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Data,
    Solver,
}

impl SssaError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SssaError::Config(_) | SssaError::Unknown { .. } => ErrorClass::Usage,
            SssaError::Io { .. } => ErrorClass::Io,
            SssaError::Column { .. } | SssaError::Iteration { .. } => ErrorClass::Solver,
            SssaError::Shape { .. }
            | SssaError::EmptyColumn(_)
            | SssaError::NonFinite { .. }
            | SssaError::CannotAutoScale
            | SssaError::LabelLength(..)
            | SssaError::ZeroNormTruth
            | SssaError::Data(_) => ErrorClass::Data,
        }
    }
}
