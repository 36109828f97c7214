use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {a_rows}x{a_cols}, right is {b_rows}x{b_cols}")]
    ShapeMismatch {
        op: &'static str,
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },

    #[error("non-finite value produced by {op} at ({row}, {col})")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { line: Option<usize>, msg: String },

    #[error("file format error: {0}")]
    Format(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            line: Some(line),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
