//! Runtime error types: framing, codec, and protocol failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed message framing: bad magic, unknown type, bad lengths.
    #[error("framing: {0}")]
    Frame(String),

    /// Malformed compressed stream: truncation or an impossible code.
    #[error("codec: {0}")]
    Codec(String),

    /// Semantically invalid message sequence or content.
    #[error("protocol: {0}")]
    Protocol(String),

    /// Bad runtime configuration (unknown model, invalid parameters).
    #[error("configuration: {0}")]
    Config(String),

    /// A failure attributed to a specific frame of a device session.
    #[error("session failure at frame {frame}: {source}")]
    Session {
        frame: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Core(#[from] janus_core::Error),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attribute this error to a frame index.
    pub fn at_frame(self, frame: u64) -> Self {
        Error::Session { frame, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
