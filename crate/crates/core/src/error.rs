use std::fmt;

use thiserror::Error;

use crate::path::Path;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors from document access, encoding, and delta application.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueError {
    #[error("field path {0:?} resolves to a non-scalar value")]
    NotScalar(String),
    #[error("invalid field path {0:?}")]
    InvalidFieldPath(String),
    #[error("duplicate field {0:?}")]
    DuplicateField(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("json error: {0}")]
    Json(String),
    #[error("delta target field {0:?} is missing")]
    DeltaTargetMissing(String),
    #[error("delta on field {field:?}: expected {expected}, found {found}")]
    DeltaTypeMismatch {
        field: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("delta on field {0:?} overflows int64")]
    DeltaOverflow(String),
    #[error("invalid delta: {0}")]
    InvalidDelta(String),
}

/// Path validation errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path must start with '/': {0:?}")]
    NotAbsolute(String),
    #[error("empty path component in {0:?}")]
    EmptyComponent(String),
    #[error("reserved byte in path component {0:?}")]
    ReservedByte(String),
    #[error("path deeper than {max} components")]
    TooDeep { max: usize },
    #[error("malformed encoded key")]
    MalformedKey,
}

/// Why a write set failed its preconditions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreconditionFailure {
    #[error("parent of {0} does not exist")]
    ParentMissing(Path),
    #[error("object {0} already exists")]
    DuplicatePath(Path),
    #[error("object {0} does not exist")]
    TargetMissing(Path),
    #[error("parent of {0} is a leaf object")]
    ParentIsLeaf(Path),
    #[error("leaf object {0} is immutable")]
    LeafImmutable(Path),
    #[error("object {0} is written more than once in one transaction")]
    RepeatedPath(Path),
    #[error("merge on {path} cannot be applied: {reason}")]
    InvalidMerge { path: Path, reason: String },
    #[error("root cannot be written")]
    RootWrite,
}

/// Wire-level error classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Syntax,
    Precondition,
    Conflict,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Syntax => "syntax",
            ErrorCode::Precondition => "precondition",
            ErrorCode::Conflict => "conflict",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "syntax" => ErrorCode::Syntax,
            "precondition" => ErrorCode::Precondition,
            "conflict" => ErrorCode::Conflict,
            "not_found" => ErrorCode::NotFound,
            "internal" => ErrorCode::Internal,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("precondition failed: {0}")]
    Precondition(#[from] PreconditionFailure),
    #[error("validation conflict: {0}")]
    Conflict(String),
    #[error("lock wait timed out on {0}")]
    LockTimeout(Path),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("corruption: {0}")]
    Corruption(String),
    #[error("engine is in read-only failure mode")]
    ReadOnlyMode,
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Value(_) | Error::Path(_) | Error::Syntax { .. } | Error::InvalidArgument(_) => {
                ErrorCode::Syntax
            }
            Error::Precondition(_) => ErrorCode::Precondition,
            Error::Conflict(_) | Error::LockTimeout(_) => ErrorCode::Conflict,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::Storage(_) | Error::Corruption(_) | Error::ReadOnlyMode => ErrorCode::Internal,
        }
    }

    /// True for errors that end a transaction as an abort (as opposed to
    /// malformed requests or engine failures).
    pub fn is_abort(&self) -> bool {
        matches!(self, Error::Precondition(_) | Error::Conflict(_) | Error::LockTimeout(_))
    }
}

impl From<fjall::Error> for Error {
    fn from(e: fjall::Error) -> Self {
        Error::Storage(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Storage(e.to_string())
    }
}
