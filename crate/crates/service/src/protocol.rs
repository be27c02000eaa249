//! Request and response envelopes.

use arbor_core::{Error, ErrorCode, PreconditionFailure, Vid};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: u64,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    /// Read-only sessions only learn the read vid; read-write ones also get
    /// a transaction id scoped to the connection.
    StartTransaction {
        #[serde(default)]
        read_only: bool,
    },
    ExecuteQuery {
        query: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        txn_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<Vid>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot: Option<String>,
    },
    Commit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        txn_id: Option<u64>,
        writes: Json,
    },
    Abort {
        txn_id: u64,
    },
    Snapshot {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vid: Option<Vid>,
    },
    Clone {
        src: String,
        dest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vid: Option<Vid>,
    },
    Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub path: String,
    pub value: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    /// Finer abort reason for precondition failures, e.g. `duplicate_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        WireError {
            code: code.as_str().to_string(),
            reason: None,
            message: message.into(),
        }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        ErrorCode::parse(&self.code)
    }
}

impl From<&Error> for WireError {
    fn from(e: &Error) -> Self {
        let reason = match e {
            Error::Precondition(f) => Some(precondition_reason(f)),
            Error::LockTimeout(_) => Some("lock_timeout"),
            Error::ReadOnlyMode => Some("read_only"),
            _ => None,
        };
        WireError {
            code: e.code().as_str().to_string(),
            reason: reason.map(str::to_string),
            message: e.to_string(),
        }
    }
}

fn precondition_reason(f: &PreconditionFailure) -> &'static str {
    match f {
        PreconditionFailure::ParentMissing(_) => "parent_missing",
        PreconditionFailure::DuplicatePath(_) => "duplicate_path",
        PreconditionFailure::TargetMissing(_) => "target_missing",
        PreconditionFailure::ParentIsLeaf(_) => "parent_is_leaf",
        PreconditionFailure::LeafImmutable(_) => "leaf_immutable",
        PreconditionFailure::RepeatedPath(_) => "repeated_path",
        PreconditionFailure::InvalidMerge { .. } => "invalid_merge",
        PreconditionFailure::RootWrite => "root_write",
    }
}

/// Server to client. Every request gets exactly one terminal response:
/// `Ok`, `Error`, or the `Chunk` carrying `done: true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// `None` only when the request could not be parsed far enough to
    /// recover its id.
    pub request_id: Option<u64>,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Body {
    Ok { result: Json },
    Chunk { seq: u64, rows: Vec<Row>, done: bool },
    Error { error: WireError },
}

impl Response {
    pub fn is_terminal(&self) -> bool {
        !matches!(self.body, Body::Chunk { done: false, .. })
    }
}
