//! Client write sets and their JSON form.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map as JsonMap, Value as Json};

use crate::delta::Delta;
use crate::error::{Error, Result};
use crate::path::{Path, Vid};
use crate::store::LeafRef;
use crate::value::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteKind {
    Add,
    Update,
    Remove,
    Merge,
}

impl WriteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WriteKind::Add => "add",
            WriteKind::Update => "update",
            WriteKind::Remove => "remove",
            WriteKind::Merge => "merge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "add" => WriteKind::Add,
            "update" => WriteKind::Update,
            "remove" => WriteKind::Remove,
            "merge" => WriteKind::Merge,
            _ => return None,
        })
    }
}

impl fmt::Display for WriteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One element of a transaction's write set.
#[derive(Debug, Clone, PartialEq)]
pub enum WriteOp {
    /// Creates an object; fails if it exists or the parent is missing.
    Add { path: Path, value: Document, leaf: bool },
    /// Replaces an inner object, creating it when absent. With `leaf` set
    /// it creates a leaf and requires the path to be free.
    Update { path: Path, value: Document, leaf: bool },
    /// Removes an object and its whole subtree.
    Remove { path: Path },
    /// Applies a commutative delta at commit time.
    Merge { path: Path, delta: Delta },
    /// Adds a leaf that shares the document of an existing primary leaf.
    Alias { path: Path, primary: LeafRef },
}

impl WriteOp {
    pub fn add(path: Path, value: Document) -> Self {
        WriteOp::Add { path, value, leaf: false }
    }

    pub fn add_leaf(path: Path, value: Document) -> Self {
        WriteOp::Add { path, value, leaf: true }
    }

    pub fn update(path: Path, value: Document) -> Self {
        WriteOp::Update { path, value, leaf: false }
    }

    pub fn remove(path: Path) -> Self {
        WriteOp::Remove { path }
    }

    pub fn merge(path: Path, delta: Delta) -> Self {
        WriteOp::Merge { path, delta }
    }

    pub fn path(&self) -> &Path {
        match self {
            WriteOp::Add { path, .. }
            | WriteOp::Update { path, .. }
            | WriteOp::Remove { path }
            | WriteOp::Merge { path, .. }
            | WriteOp::Alias { path, .. } => path,
        }
    }

    pub fn kind(&self) -> WriteKind {
        match self {
            WriteOp::Add { .. } | WriteOp::Alias { .. } => WriteKind::Add,
            WriteOp::Update { .. } => WriteKind::Update,
            WriteOp::Remove { .. } => WriteKind::Remove,
            WriteOp::Merge { .. } => WriteKind::Merge,
        }
    }

    pub fn to_json(&self) -> Json {
        let mut m = JsonMap::new();
        m.insert("path".into(), Json::String(self.path().to_string()));
        m.insert("type".into(), Json::String(self.kind().as_str().into()));
        match self {
            WriteOp::Add { value, leaf, .. } | WriteOp::Update { value, leaf, .. } => {
                m.insert("value".into(), value.to_json());
                if *leaf {
                    m.insert("leaf".into(), Json::Bool(true));
                }
            }
            WriteOp::Merge { delta, .. } => {
                m.insert("value".into(), delta.to_json());
            }
            WriteOp::Alias { primary, .. } => {
                m.insert(
                    "alias".into(),
                    serde_json::json!({"path": primary.path.to_string(), "vid": primary.create_vid.0}),
                );
            }
            WriteOp::Remove { .. } => {}
        }
        Json::Object(m)
    }

    pub fn from_json(json: &Json) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("write op: {msg}"));
        let obj = json.as_object().ok_or_else(|| bad("expected an object".into()))?;
        let path = obj
            .get("path")
            .and_then(Json::as_str)
            .ok_or_else(|| bad("missing \"path\"".into()))?;
        let path = Path::parse(path)?;
        let kind = obj
            .get("type")
            .and_then(Json::as_str)
            .ok_or_else(|| bad("missing \"type\"".into()))?;
        let kind = WriteKind::parse(kind).ok_or_else(|| bad(format!("unknown type {kind:?}")))?;
        let leaf = match obj.get("leaf") {
            None => false,
            Some(Json::Bool(b)) => *b,
            Some(other) => return Err(bad(format!("\"leaf\" must be a boolean, got {other}"))),
        };
        let value = obj.get("value");
        Ok(match kind {
            WriteKind::Add if obj.contains_key("alias") => {
                let a = &obj["alias"];
                let p = a.get("path").and_then(Json::as_str).ok_or_else(|| bad("alias needs \"path\"".into()))?;
                let v = a.get("vid").and_then(Json::as_u64).ok_or_else(|| bad("alias needs \"vid\"".into()))?;
                WriteOp::Alias {
                    path,
                    primary: LeafRef {
                        path: Path::parse(p)?,
                        create_vid: Vid(v),
                    },
                }
            }
            WriteKind::Add | WriteKind::Update => {
                let value = value.ok_or_else(|| bad(format!("{kind} requires \"value\"")))?;
                let value = Document::from_json(value)?;
                if kind == WriteKind::Add {
                    WriteOp::Add { path, value, leaf }
                } else {
                    WriteOp::Update { path, value, leaf }
                }
            }
            WriteKind::Remove => {
                if value.is_some_and(|v| !v.is_null()) {
                    return Err(bad("remove carries no value".into()));
                }
                WriteOp::Remove { path }
            }
            WriteKind::Merge => {
                let value = value.ok_or_else(|| bad("merge requires a delta in \"value\"".into()))?;
                WriteOp::Merge {
                    path,
                    delta: Delta::from_json(value)?,
                }
            }
        })
    }
}

/// Parses a JSON array of write ops.
pub fn parse_write_set(text: &str) -> Result<Vec<WriteOp>> {
    let json: Json =
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("write set: {e}")))?;
    write_set_from_json(&json)
}

pub fn write_set_from_json(json: &Json) -> Result<Vec<WriteOp>> {
    json.as_array()
        .ok_or_else(|| Error::InvalidArgument("write set must be a JSON array".into()))?
        .iter()
        .map(WriteOp::from_json)
        .collect()
}

pub fn write_set_to_json(ops: &[WriteOp]) -> Json {
    Json::Array(ops.iter().map(WriteOp::to_json).collect())
}
