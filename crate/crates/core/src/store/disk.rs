//! On-disk backend over an LSM tree with one keyspace per logical space.

use std::path::Path as FsPath;
use std::sync::Arc;

use fjall::{Database, Keyspace, KeyspaceCreateOptions, PersistMode, Readable};

use super::kv::{BatchOp, KvIter, KvStore, KvView, Space};
use crate::error::{Error, Result};

pub struct DiskKv {
    db: Database,
    spaces: [Keyspace; 4],
}

impl DiskKv {
    pub fn open(dir: &FsPath) -> Result<Self> {
        let db = Database::builder(dir).manual_journal_persist(true).open()?;
        let ks = |s: Space| db.keyspace(s.name(), KeyspaceCreateOptions::default);
        let spaces = [
            ks(Space::Snapshot)?,
            ks(Space::Delta)?,
            ks(Space::Leaf)?,
            ks(Space::Meta)?,
        ];
        Ok(DiskKv { db, spaces })
    }
}

struct DiskView {
    snap: fjall::Snapshot,
    spaces: [Keyspace; 4],
}

impl KvView for DiskView {
    fn get(&self, space: Space, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self
            .snap
            .get(&self.spaces[space.index()], key)?
            .map(|v| v.to_vec()))
    }

    fn range(&self, space: Space, start: &[u8], end: Option<&[u8]>) -> KvIter {
        let ks = &self.spaces[space.index()];
        let iter = match end {
            Some(e) if e <= start => return Box::new(std::iter::empty()),
            Some(e) => self.snap.range(ks, start.to_vec()..e.to_vec()),
            None => self.snap.range(ks, start.to_vec()..),
        };
        Box::new(iter.map(|g| {
            g.into_inner()
                .map(|(k, v)| (k.to_vec(), v.to_vec()))
                .map_err(Error::from)
        }))
    }
}

impl KvStore for DiskKv {
    fn view(&self) -> Arc<dyn KvView> {
        Arc::new(DiskView {
            snap: self.db.snapshot(),
            spaces: self.spaces.clone(),
        })
    }

    fn write(&self, ops: Vec<BatchOp>) -> Result<()> {
        let mut batch = self.db.batch().durability(None);
        for op in ops {
            match op {
                BatchOp::Put(s, k, v) => batch.insert(&self.spaces[s.index()], k, v),
                BatchOp::Delete(s, k) => batch.remove(&self.spaces[s.index()], k),
            }
        }
        batch.commit()?;
        Ok(())
    }

    fn sync(&self) -> Result<()> {
        self.db.persist(PersistMode::SyncAll)?;
        Ok(())
    }
}
