use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("NaN gradient for parameter `{param}`")]
    NanGradient { param: String },

    #[error("non-finite KL at t={t}: D_st={d_static}, D_ch={d_change}")]
    NonFiniteKl { t: usize, d_static: f64, d_change: f64 },

    #[error("non-finite ELBO term at t={t}")]
    NonFiniteElbo { t: usize },

    #[error("training diverged at epoch {epoch} (loss {loss}); trace so far: {trace:?}")]
    Diverged { epoch: usize, loss: f64, trace: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what}: needed {needed} bytes, had {available}")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("{path}:{line}: {reason}")]
    Validation { path: PathBuf, line: usize, reason: String },

    #[error("video label undefined: {0}")]
    LabelUndefined(String),

    #[error("infeasible corpus spec: {0}")]
    Infeasible(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
