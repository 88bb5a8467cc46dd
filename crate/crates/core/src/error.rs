use std::path::PathBuf;

use thiserror::Error;

use crate::ndgrad::GradError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{what}: length mismatch ({left} vs {right})")]
    Length {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("non-finite {what} in parameter block {block}")]
    NonFinite { what: &'static str, block: String },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
