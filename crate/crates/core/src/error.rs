use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DvtError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DvtError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {kind} data at byte offset {offset}: {msg}")]
    Format {
        kind: &'static str,
        offset: usize,
        msg: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DvtError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DvtError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        DvtError::Config(msg.into())
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        DvtError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
