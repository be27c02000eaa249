//! In-memory backend built on persistent ordered maps, so views are O(1)
//! clones that stay consistent while writers proceed.

use std::collections::VecDeque;
use std::ops::Bound;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use im::OrdMap;
use parking_lot::RwLock;

use super::kv::{BatchOp, KvIter, KvPair, KvStore, KvView, Space};
use crate::error::{Error, Result};

type Map = OrdMap<Vec<u8>, Vec<u8>>;

#[derive(Default)]
pub struct MemoryKv {
    spaces: RwLock<[Map; 4]>,
    fail_sync: AtomicBool,
}

impl MemoryKv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes every later `sync` call fail (fault injection for tests).
    pub fn fail_syncs(&self, fail: bool) {
        self.fail_sync.store(fail, Ordering::SeqCst);
    }
}

struct MemoryView {
    spaces: [Map; 4],
}

impl KvView for MemoryView {
    fn get(&self, space: Space, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.spaces[space.index()].get(key).cloned())
    }

    fn range(&self, space: Space, start: &[u8], end: Option<&[u8]>) -> KvIter {
        Box::new(ChunkedRange {
            map: self.spaces[space.index()].clone(),
            next: Bound::Included(start.to_vec()),
            end: end.map(<[u8]>::to_vec),
            buf: VecDeque::new(),
            done: false,
        })
    }
}

const CHUNK: usize = 256;

struct ChunkedRange {
    map: Map,
    next: Bound<Vec<u8>>,
    end: Option<Vec<u8>>,
    buf: VecDeque<KvPair>,
    done: bool,
}

impl ChunkedRange {
    fn refill(&mut self) {
        let upper = match &self.end {
            Some(e) => Bound::Excluded(e.clone()),
            None => Bound::Unbounded,
        };
        if let (Bound::Included(s) | Bound::Excluded(s), Some(e)) = (&self.next, &self.end) {
            if s >= e {
                self.done = true;
                return;
            }
        }
        self.buf.extend(
            self.map
                .range((self.next.clone(), upper))
                .take(CHUNK)
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        match self.buf.back() {
            Some((k, _)) if self.buf.len() == CHUNK => self.next = Bound::Excluded(k.clone()),
            _ => self.done = true,
        }
    }
}

impl Iterator for ChunkedRange {
    type Item = Result<KvPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.buf.is_empty() && !self.done {
            self.refill();
        }
        self.buf.pop_front().map(Ok)
    }
}

impl KvStore for MemoryKv {
    fn view(&self) -> Arc<dyn KvView> {
        Arc::new(MemoryView {
            spaces: self.spaces.read().clone(),
        })
    }

    fn write(&self, ops: Vec<BatchOp>) -> Result<()> {
        let mut spaces = self.spaces.write();
        for op in ops {
            match op {
                BatchOp::Put(s, k, v) => {
                    spaces[s.index()].insert(k, v);
                }
                BatchOp::Delete(s, k) => {
                    spaces[s.index()].remove(&k);
                }
            }
        }
        Ok(())
    }

    fn sync(&self) -> Result<()> {
        if self.fail_sync.load(Ordering::SeqCst) {
            return Err(Error::Storage("injected sync failure".into()));
        }
        Ok(())
    }
}
