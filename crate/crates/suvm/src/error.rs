//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("image {path:?}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("singular precision matrix: spring network is disconnected (component {component:?} has no path to the anchor)")]
    DisconnectedNetwork { component: Vec<usize> },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("no category discovered: {0}")]
    NoCategory(String),
}

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }
}
