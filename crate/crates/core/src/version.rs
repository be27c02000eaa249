//! Named snapshots and subtree clones.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{validate_id, IdBounds, Path, Vid};
use crate::query::{Expr, Predicate, OBJ_ID};
use crate::store::ObjectKind;
use crate::txn::{Engine, WriteOp};
use crate::value::{CmpOp, Scalar};

const SNAPSHOT_PREFIX: &[u8] = b"snapshot/";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub name: String,
    pub vid: Vid,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

fn snapshot_key(name: &str) -> Vec<u8> {
    let mut k = SNAPSHOT_PREFIX.to_vec();
    k.extend_from_slice(name.as_bytes());
    k
}

fn decode_entry(raw: &[u8]) -> Result<SnapshotEntry> {
    serde_json::from_slice(raw).map_err(|e| Error::Corruption(format!("snapshot entry: {e}")))
}

impl Engine {
    /// Names the state at `vid` (default: current read_vid). The mapping is
    /// durable when this returns.
    pub fn snapshot(&self, name: &str, vid: Option<Vid>) -> Result<SnapshotEntry> {
        validate_id(name).map_err(|e| Error::InvalidArgument(format!("snapshot name: {e}")))?;
        let rv = self.read_vid();
        let vid = vid.unwrap_or(rv);
        if vid > rv {
            return Err(Error::InvalidArgument(format!(
                "snapshot vid {vid} is beyond read_vid {rv}"
            )));
        }
        if self.is_read_only() {
            return Err(Error::ReadOnlyMode);
        }
        let _g = self.shared.snapshot_lock.lock();
        let key = snapshot_key(name);
        if self.store().get_meta(&key)?.is_some() {
            return Err(Error::InvalidArgument(format!("snapshot {name:?} already exists")));
        }
        let entry = SnapshotEntry {
            name: name.to_string(),
            vid,
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let raw = serde_json::to_vec(&entry).expect("snapshot entry serializes");
        self.store().put_meta(&key, &raw)?;
        self.store().flush_log()?;
        Ok(entry)
    }

    pub fn resolve_snapshot(&self, name: &str) -> Result<Vid> {
        match self.store().get_meta(&snapshot_key(name))? {
            Some(raw) => Ok(decode_entry(&raw)?.vid),
            None => Err(Error::NotFound(format!("snapshot {name:?}"))),
        }
    }

    pub fn snapshots(&self) -> Result<Vec<SnapshotEntry>> {
        self.store()
            .scan_meta(SNAPSHOT_PREFIX)?
            .into_iter()
            .map(|(_, v)| decode_entry(&v))
            .collect()
    }

    /// Oldest vid any reader may still ask for: the watermark, lowered to
    /// the oldest named snapshot.
    pub fn retention_floor(&self) -> Result<Vid> {
        let snaps = self.snapshots()?;
        Ok(snaps.iter().map(|s| s.vid).fold(self.watermark(), Vid::min))
    }

    /// Deletes versions no reader can reach any more.
    pub fn prune_history(&self) -> Result<usize> {
        let _g = self.shared.snapshot_lock.lock();
        self.store().prune_history(self.retention_floor()?)
    }

    /// Copies `src` and its inner descendants to `dest` in one
    /// transaction. Leaves become aliases of their primaries. Without
    /// `vid` the clone reads the latest state and validates against
    /// concurrent writes to the source subtree; with `vid` it copies that
    /// historical state.
    pub fn clone_subtree(&self, src: &Path, dest: &Path, vid: Option<Vid>) -> Result<Vid> {
        if src.is_root() || dest.is_root() {
            return Err(Error::InvalidArgument("cannot clone to or from the root".into()));
        }
        if dest == src || dest.is_descendant_of(src) {
            return Err(Error::InvalidArgument(format!("{dest} lies inside {src}")));
        }
        if let Some(v) = vid {
            if v > self.read_vid() {
                return Err(Error::InvalidArgument(format!("vid {v} is beyond read_vid")));
            }
        }
        let mut txn = self.begin()?;
        let live = vid.is_none();
        let mut at = vid.unwrap_or(txn.read_vid());
        if live {
            let id = src.id().expect("non-root");
            let pred = Predicate::Expr(Expr::Cmp {
                field: OBJ_ID.into(),
                op: CmpOp::Eq,
                lit: Scalar::Str(id.into()),
            });
            let parent = src.parent().expect("non-root");
            at = txn.record_scan(&parent, Arc::new(pred), IdBounds::exact(id))?;
        }
        let root = self
            .store()
            .get(src, at)?
            .ok_or_else(|| Error::NotFound(format!("clone source {src}")))?;
        let mut ops = Vec::new();
        let mut frontier = vec![root];
        while let Some(obj) = frontier.pop() {
            let target = obj.path.rebase(src, dest).expect("inside source subtree");
            match obj.kind {
                ObjectKind::Leaf => ops.push(WriteOp::Alias {
                    path: target,
                    primary: obj.primary.clone().expect("leaf has a primary"),
                }),
                ObjectKind::Inner => {
                    let mut read_at = at;
                    if live {
                        read_at = txn.record_scan(&obj.path, Arc::new(Predicate::Wildcard), IdBounds::all())?;
                    }
                    for child in self.store().scan_children(&obj.path, read_at, &IdBounds::all()) {
                        frontier.push(child?);
                    }
                    ops.push(WriteOp::add(target, obj.doc));
                }
            }
        }
        txn.commit(ops)
    }
}
