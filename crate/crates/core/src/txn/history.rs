//! Committed-transaction histories for offline serializability checking.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::path::{Path, Vid};

use super::WriteKind;

/// One predicate read: the children of `parent` filtered by `predicate`,
/// read at `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanLog {
    pub parent: Path,
    pub predicate: String,
    pub at: Vid,
}

/// One expanded write with the images it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLog {
    pub path: Path,
    pub kind: WriteKind,
    pub leaf: bool,
    pub before: Option<Json>,
    pub after: Option<Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnLog {
    pub txn_id: u64,
    pub read_vid: Vid,
    pub commit_vid: Vid,
    pub scans: Vec<ScanLog>,
    /// The write set as submitted.
    pub writes: Vec<Json>,
    pub images: Vec<ImageLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLog {
    pub path: Path,
    pub leaf: bool,
    pub doc: Json,
}

/// Initial state plus every transaction committed after `start_vid`, in
/// commit order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub start_vid: Vid,
    pub initial: Vec<ObjectLog>,
    pub txns: Vec<TxnLog>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Start { start_vid: Vid, initial: Vec<ObjectLog> },
    Txn(TxnLog),
}

impl History {
    /// Line-delimited JSON: a header line, then one line per transaction.
    pub fn to_json_lines(&self) -> String {
        let mut out = serde_json::to_string(&Line::Start {
            start_vid: self.start_vid,
            initial: self.initial.clone(),
        })
        .expect("history serializes");
        out.push('\n');
        for t in &self.txns {
            out.push_str(&serde_json::to_string(t).expect("history serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let mut h = History::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                Line::Start { start_vid, initial } => {
                    h.start_vid = start_vid;
                    h.initial = initial;
                }
                Line::Txn(t) => h.txns.push(t),
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_lines_round_trip() {
        let h = History {
            start_vid: Vid(3),
            initial: vec![ObjectLog {
                path: Path::parse("/a").unwrap(),
                leaf: false,
                doc: serde_json::json!({"x": 1}),
            }],
            txns: vec![TxnLog {
                txn_id: 9,
                read_vid: Vid(3),
                commit_vid: Vid(4),
                scans: vec![ScanLog {
                    parent: Path::root(),
                    predicate: "[x > 0]".into(),
                    at: Vid(3),
                }],
                writes: vec![serde_json::json!({"path": "/a/b", "type": "add", "value": {}})],
                images: vec![ImageLog {
                    path: Path::parse("/a/b").unwrap(),
                    kind: WriteKind::Add,
                    leaf: false,
                    before: None,
                    after: Some(serde_json::json!({})),
                }],
            }],
        };
        let text = h.to_json_lines();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(History::from_json_lines(&text).unwrap(), h);
    }
}
