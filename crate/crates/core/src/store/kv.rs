//! Ordered key-value backend interface.

use std::sync::Arc;

use crate::error::Result;

/// Logical keyspaces. Backends keep them physically separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Snapshot,
    Delta,
    Leaf,
    Meta,
}

impl Space {
    pub const ALL: [Space; 4] = [Space::Snapshot, Space::Delta, Space::Leaf, Space::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Space::Snapshot => "snapshot",
            Space::Delta => "delta",
            Space::Leaf => "leaf",
            Space::Meta => "meta",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchOp {
    Put(Space, Vec<u8>, Vec<u8>),
    Delete(Space, Vec<u8>),
}

pub type KvPair = (Vec<u8>, Vec<u8>);
pub type KvIter = Box<dyn Iterator<Item = Result<KvPair>> + Send>;

/// A consistent read view across all keyspaces.
pub trait KvView: Send + Sync {
    fn get(&self, space: Space, key: &[u8]) -> Result<Option<Vec<u8>>>;

    /// Ascending iteration over `[start, end)`; `end = None` is unbounded.
    fn range(&self, space: Space, start: &[u8], end: Option<&[u8]>) -> KvIter;
}

pub trait KvStore: Send + Sync {
    fn view(&self) -> Arc<dyn KvView>;

    /// Applies all ops atomically. Not durable until [`KvStore::sync`].
    fn write(&self, ops: Vec<BatchOp>) -> Result<()>;

    /// Makes every write so far durable.
    fn sync(&self) -> Result<()>;
}
