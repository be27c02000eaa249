use std::io;

use arbor_core::ErrorCode;
use thiserror::Error;

use crate::protocol::WireError;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{}: {}", .0.code, .0.message)]
    Remote(WireError),
    #[error(transparent)]
    Engine(#[from] arbor_core::Error),
}

impl ServiceError {
    /// Error class as seen by a client, whatever side raised it.
    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::Remote(w) => w.code().unwrap_or(ErrorCode::Internal),
            ServiceError::Engine(e) => e.code(),
            ServiceError::Config(_) => ErrorCode::Syntax,
            ServiceError::Io(_) | ServiceError::Protocol(_) => ErrorCode::Internal,
        }
    }

    pub fn reason(&self) -> Option<String> {
        match self {
            ServiceError::Remote(w) => w.reason.clone(),
            ServiceError::Engine(e) => WireError::from(e).reason,
            _ => None,
        }
    }
}

impl From<arbor_core::PathError> for ServiceError {
    fn from(e: arbor_core::PathError) -> Self {
        ServiceError::Engine(e.into())
    }
}
