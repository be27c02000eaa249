//! Versioned object storage.
//!
//! Three mappings live in separate keyspaces:
//!
//! * snapshot: `path -> (delta_vid, cur_vid, doc)`, the current version of
//!   every live inner object;
//! * delta: `(path, start_vid) -> (end_vid, doc)`, older inner versions,
//!   newest first per path;
//! * leaf: `(path, create_vid) -> (tombstone_vid, doc | primary ref)`,
//!   immutable leaf objects and aliases, newest first per path.
//!
//! A fourth keyspace holds engine metadata (last applied vid, snapshot
//! names).

mod disk;
mod kv;
mod memory;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::iter::Peekable;
use std::path::Path as FsPath;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use rayon::prelude::*;

pub use disk::DiskKv;
pub use kv::{BatchOp, KvIter, KvPair, KvStore, KvView, Space};
pub use memory::MemoryKv;

use crate::delta::{apply_delta, Delta};
use crate::error::{Error, PreconditionFailure, Result};
use crate::path::{prefix_successor, IdBounds, Path, Vid, SEP};
use crate::value::Document;

const LAST_VID_KEY: &[u8] = b"last_vid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Inner,
    Leaf,
}

/// Identifies one primary leaf record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeafRef {
    pub path: Path,
    pub create_vid: Vid,
}

/// An object as seen by a reader at some vid.
#[derive(Debug, Clone, PartialEq)]
pub struct Object {
    pub path: Path,
    pub kind: ObjectKind,
    pub doc: Document,
    /// Primary record backing a leaf (itself, or the alias target).
    pub primary: Option<LeafRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub delta_vid: Vid,
    pub cur_vid: Vid,
    pub doc: Document,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRecord {
    pub path: Path,
    pub start_vid: Vid,
    pub end_vid: Vid,
    pub doc: Document,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafPayload {
    Primary(Document),
    Alias(LeafRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafRecord {
    pub path: Path,
    pub create_vid: Vid,
    pub tombstone_vid: Vid,
    pub payload: LeafPayload,
}

impl LeafRecord {
    pub fn visible_at(&self, at: Vid) -> bool {
        self.create_vid <= at && (self.tombstone_vid.is_never() || at < self.tombstone_vid)
    }

    pub fn is_live(&self) -> bool {
        self.tombstone_vid.is_never()
    }
}

/// A validated, fully expanded write handed to [`Store::apply_batch`].
#[derive(Debug, Clone, PartialEq)]
pub enum StoreWrite {
    PutInner { path: Path, doc: Document },
    MergeInner { path: Path, delta: Delta },
    RemoveInner { path: Path },
    AddLeaf { path: Path, doc: Document },
    AddAlias { path: Path, primary: LeafRef },
    RemoveLeaf { path: Path },
}

impl StoreWrite {
    pub fn path(&self) -> &Path {
        match self {
            StoreWrite::PutInner { path, .. }
            | StoreWrite::MergeInner { path, .. }
            | StoreWrite::RemoveInner { path }
            | StoreWrite::AddLeaf { path, .. }
            | StoreWrite::AddAlias { path, .. }
            | StoreWrite::RemoveLeaf { path } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeafCounts {
    pub primaries: usize,
    pub aliases: usize,
}

pub struct Store {
    kv: Arc<dyn KvStore>,
    memory: Option<Arc<MemoryKv>>,
    dirty: AtomicBool,
    syncs: AtomicU64,
    sync_lock: Mutex<()>,
}

impl Store {
    pub fn memory() -> Self {
        let mem = Arc::new(MemoryKv::new());
        Self::with_backend(mem.clone(), Some(mem))
    }

    pub fn open(dir: &FsPath) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self::with_backend(Arc::new(DiskKv::open(dir)?), None))
    }

    fn with_backend(kv: Arc<dyn KvStore>, memory: Option<Arc<MemoryKv>>) -> Self {
        Store {
            kv,
            memory,
            dirty: AtomicBool::new(false),
            syncs: AtomicU64::new(0),
            sync_lock: Mutex::new(()),
        }
    }

    /// The in-memory backend, when this store uses one.
    pub fn memory_backend(&self) -> Option<&MemoryKv> {
        self.memory.as_deref()
    }

    pub fn view(&self) -> StoreView {
        StoreView {
            kv: self.kv.view(),
        }
    }

    pub fn get_inner(&self, path: &Path, at: Vid) -> Result<Option<Document>> {
        self.view().get_inner(path, at)
    }

    pub fn resolve_leaf(&self, path: &Path, at: Vid) -> Result<Option<Document>> {
        self.view().resolve_leaf(path, at)
    }

    pub fn get(&self, path: &Path, at: Vid) -> Result<Option<Object>> {
        self.view().get(path, at)
    }

    pub fn scan_children(&self, parent: &Path, at: Vid, bounds: &IdBounds) -> ChildScan {
        self.view().scan_children(parent, at, bounds)
    }

    pub fn last_vid(&self) -> Result<Vid> {
        Ok(match self.kv.view().get(Space::Meta, LAST_VID_KEY)? {
            Some(b) => Vid(read_u64(&b, 0)?),
            None => Vid::NEVER,
        })
    }

    pub fn get_meta(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        self.kv.view().get(Space::Meta, key)
    }

    pub fn scan_meta(&self, prefix: &[u8]) -> Result<Vec<KvPair>> {
        let end = prefix_successor(prefix);
        self.kv
            .view()
            .range(Space::Meta, prefix, end.as_deref())
            .collect()
    }

    pub fn put_meta(&self, key: &[u8], value: &[u8]) -> Result<()> {
        self.kv
            .write(vec![BatchOp::Put(Space::Meta, key.to_vec(), value.to_vec())])?;
        self.dirty.store(true, Ordering::SeqCst);
        Ok(())
    }

    /// Applies one transaction's writes atomically at `vid`. Returns the
    /// final value of every merged object. A merge whose delta does not fit
    /// the current value fails the whole batch without writing anything.
    pub fn apply_batch(&self, writes: &[StoreWrite], vid: Vid) -> Result<Vec<(Path, Document)>> {
        self.apply_batch_with(writes, vid, None)
    }

    /// Like [`Store::apply_batch`], but builds the key-value operations on
    /// `pool` with the writes hash-partitioned by parent path.
    pub fn apply_batch_with(
        &self,
        writes: &[StoreWrite],
        vid: Vid,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<Vec<(Path, Document)>> {
        let view = self.kv.view();
        let (mut ops, merged) = match pool {
            Some(pool) if writes.len() >= PARALLEL_MIN && pool.current_num_threads() > 1 => {
                let parts = partition_by_parent(writes, pool.current_num_threads(), StoreWrite::path);
                let built: Vec<Result<Built>> = pool.install(|| {
                    parts
                        .par_iter()
                        .map(|part| build_ops(&*view, part.iter().copied(), vid))
                        .collect()
                });
                let mut ops = Vec::with_capacity(writes.len() * 2 + 1);
                let mut merged = Vec::new();
                for b in built {
                    let (o, m) = b?;
                    ops.extend(o);
                    merged.extend(m);
                }
                (ops, merged)
            }
            _ => build_ops(&*view, writes.iter(), vid)?,
        };
        ops.push(BatchOp::Put(
            Space::Meta,
            LAST_VID_KEY.to_vec(),
            vid.0.to_be_bytes().to_vec(),
        ));
        self.kv.write(ops)?;
        self.dirty.store(true, Ordering::SeqCst);
        Ok(merged)
    }

    /// Makes all applied batches durable with a single sync. No-op when
    /// nothing was written since the last flush.
    pub fn flush_log(&self) -> Result<()> {
        let _g = self.sync_lock.lock();
        if !self.dirty.swap(false, Ordering::SeqCst) {
            return Ok(());
        }
        self.syncs.fetch_add(1, Ordering::SeqCst);
        self.kv.sync().inspect_err(|_| {
            self.dirty.store(true, Ordering::SeqCst);
        })
    }

    /// Number of sync calls issued so far.
    pub fn sync_count(&self) -> u64 {
        self.syncs.load(Ordering::SeqCst)
    }

    pub fn leaf_counts(&self) -> Result<LeafCounts> {
        let mut c = LeafCounts::default();
        for kv in self.kv.view().range(Space::Leaf, &[], None) {
            let (k, v) = kv?;
            match decode_leaf(&k, &v)?.payload {
                LeafPayload::Primary(_) => c.primaries += 1,
                LeafPayload::Alias(_) => c.aliases += 1,
            }
        }
        Ok(c)
    }

    /// Deletes history no reader at or above `floor` can observe: delta
    /// versions ending at or below `floor`, and leaf records tombstoned at
    /// or below `floor` that no surviving alias references. Returns the
    /// number of deleted records.
    pub fn prune_history(&self, floor: Vid) -> Result<usize> {
        let view = self.kv.view();
        let mut ops = Vec::new();
        for kv in view.range(Space::Delta, &[], None) {
            let (k, v) = kv?;
            if Vid(read_u64(&v, 0)?) <= floor {
                ops.push(BatchOp::Delete(Space::Delta, k));
            }
        }
        let mut leaves = Vec::new();
        for kv in view.range(Space::Leaf, &[], None) {
            let (k, v) = kv?;
            leaves.push((k.clone(), decode_leaf(&k, &v)?));
        }
        let dead = |r: &LeafRecord| !r.tombstone_vid.is_never() && r.tombstone_vid <= floor;
        let referenced: HashSet<LeafRef> = leaves
            .iter()
            .filter(|(_, r)| !dead(r))
            .filter_map(|(_, r)| match &r.payload {
                LeafPayload::Alias(p) => Some(p.clone()),
                LeafPayload::Primary(_) => None,
            })
            .collect();
        for (k, r) in leaves {
            let me = LeafRef {
                path: r.path.clone(),
                create_vid: r.create_vid,
            };
            if dead(&r) && !referenced.contains(&me) {
                ops.push(BatchOp::Delete(Space::Leaf, k));
            }
        }
        let n = ops.len();
        if n > 0 {
            self.kv.write(ops)?;
            self.dirty.store(true, Ordering::SeqCst);
        }
        Ok(n)
    }

    /// Raw delta records of one path, newest first (for inspection).
    pub fn delta_records(&self, path: &Path) -> Result<Vec<DeltaRecord>> {
        let view = self.kv.view();
        let mut prefix = path.encode();
        prefix.push(SEP);
        let end = prefix_successor(&prefix);
        view.range(Space::Delta, &prefix, end.as_deref())
            .map(|kv| kv.and_then(|(k, v)| decode_delta(&k, &v)))
            .collect()
    }

    pub fn snapshot_record(&self, path: &Path) -> Result<Option<SnapshotRecord>> {
        read_snapshot(&*self.kv.view(), path)
    }

    /// Raw leaf records of one path, newest first (for inspection).
    pub fn leaf_records(&self, path: &Path) -> Result<Vec<LeafRecord>> {
        leaf_records(&*self.kv.view(), path)
    }

    #[cfg(test)]
    pub(crate) fn raw_write(&self, ops: Vec<BatchOp>) -> Result<()> {
        self.kv.write(ops)
    }
}

/// Consistent read view over the store.
#[derive(Clone)]
pub struct StoreView {
    kv: Arc<dyn KvView>,
}

impl StoreView {
    pub fn get_inner(&self, path: &Path, at: Vid) -> Result<Option<Document>> {
        if let Some(rec) = read_snapshot(&*self.kv, path)? {
            if rec.cur_vid <= at {
                return Ok(Some(rec.doc));
            }
        }
        Ok(delta_at(&*self.kv, path, at)?.map(|r| r.doc))
    }

    pub fn resolve_leaf(&self, path: &Path, at: Vid) -> Result<Option<Document>> {
        Ok(self.leaf_at(path, at)?.map(|o| o.doc))
    }

    fn leaf_at(&self, path: &Path, at: Vid) -> Result<Option<Object>> {
        let mut prefix = path.encode();
        prefix.push(SEP);
        let start = leaf_key(path, at);
        let end = prefix_successor(&prefix);
        let Some(kv) = self.kv.range(Space::Leaf, &start, end.as_deref()).next() else {
            return Ok(None);
        };
        let (k, v) = kv?;
        let rec = decode_leaf(&k, &v)?;
        if !rec.visible_at(at) {
            return Ok(None);
        }
        self.materialize_leaf(rec).map(Some)
    }

    /// Document of the primary leaf record `r`, tombstoned or not.
    pub fn primary_doc(&self, r: &LeafRef) -> Result<Option<Document>> {
        let key = leaf_key(&r.path, r.create_vid);
        let Some(raw) = self.kv.get(Space::Leaf, &key)? else {
            return Ok(None);
        };
        match decode_leaf(&key, &raw)?.payload {
            LeafPayload::Primary(doc) => Ok(Some(doc)),
            LeafPayload::Alias(_) => Ok(None),
        }
    }

    fn materialize_leaf(&self, rec: LeafRecord) -> Result<Object> {
        match rec.payload {
            LeafPayload::Primary(doc) => Ok(Object {
                primary: Some(LeafRef {
                    path: rec.path.clone(),
                    create_vid: rec.create_vid,
                }),
                path: rec.path,
                kind: ObjectKind::Leaf,
                doc,
            }),
            LeafPayload::Alias(target) => {
                let raw = self
                    .kv
                    .get(Space::Leaf, &leaf_key(&target.path, target.create_vid))?
                    .ok_or_else(|| {
                        Error::Corruption(format!("alias {} points to missing {}", rec.path, target.path))
                    })?;
                let prim = decode_leaf(&leaf_key(&target.path, target.create_vid), &raw)?;
                match prim.payload {
                    LeafPayload::Primary(doc) => Ok(Object {
                        path: rec.path,
                        kind: ObjectKind::Leaf,
                        doc,
                        primary: Some(target),
                    }),
                    LeafPayload::Alias(_) => Err(Error::Corruption(format!(
                        "alias {} points to another alias {}",
                        rec.path, target.path
                    ))),
                }
            }
        }
    }

    pub fn get(&self, path: &Path, at: Vid) -> Result<Option<Object>> {
        if path.is_root() {
            return Ok(None);
        }
        if let Some(doc) = self.get_inner(path, at)? {
            return Ok(Some(Object {
                path: path.clone(),
                kind: ObjectKind::Inner,
                doc,
                primary: None,
            }));
        }
        self.leaf_at(path, at)
    }

    pub fn scan_children(&self, parent: &Path, at: Vid, bounds: &IdBounds) -> ChildScan {
        let (start, end) = parent.children_range(bounds);
        let snap = self.kv.range(Space::Snapshot, &start, end.as_deref());
        let delta = self.kv.range(Space::Delta, &start, end.as_deref());
        let leaf = self.kv.range(Space::Leaf, &start, end.as_deref());
        ChildScan {
            view: self.clone(),
            at,
            end,
            snap: snap.peekable(),
            delta: delta.peekable(),
            leaf: leaf.peekable(),
            failed: false,
        }
    }

    /// All objects strictly below `root` visible at `at`, parents before
    /// children.
    pub fn descendants(&self, root: &Path, at: Vid) -> Result<Vec<Object>> {
        let mut out = Vec::new();
        let mut frontier = vec![root.clone()];
        while let Some(p) = frontier.pop() {
            for obj in self.scan_children(&p, at, &IdBounds::all()) {
                let obj = obj?;
                if obj.kind == ObjectKind::Inner {
                    frontier.push(obj.path.clone());
                }
                out.push(obj);
            }
        }
        out.sort_by(|a, b| a.path.depth().cmp(&b.path.depth()).then(a.path.cmp(&b.path)));
        Ok(out)
    }
}

/// Merged iterator over the children of one parent at one vid, in key
/// order.
pub struct ChildScan {
    view: StoreView,
    at: Vid,
    end: Option<Vec<u8>>,
    snap: Peekable<KvIter>,
    delta: Peekable<KvIter>,
    leaf: Peekable<KvIter>,
    failed: bool,
}

fn head_path(it: &mut Peekable<KvIter>, suffixed: bool) -> Result<Option<Vec<u8>>> {
    match it.peek() {
        None => Ok(None),
        Some(Err(_)) => Err(it.next().unwrap().unwrap_err()),
        Some(Ok((k, _))) => {
            if suffixed {
                Ok(Some(strip_suffix(k)?.to_vec()))
            } else {
                Ok(Some(k.clone()))
            }
        }
    }
}

impl ChildScan {
    fn step(&mut self) -> Result<Option<Object>> {
        loop {
            let heads = [
                head_path(&mut self.snap, false)?,
                head_path(&mut self.delta, true)?,
                head_path(&mut self.leaf, true)?,
            ];
            let Some(x) = heads.iter().flatten().min().cloned() else {
                return Ok(None);
            };
            let path = Path::decode(&x)?;
            let mut found: Option<Object> = None;

            if heads[0].as_ref() == Some(&x) {
                let (k, v) = self.snap.next().unwrap()?;
                let rec = decode_snapshot(&v)?;
                debug_assert_eq!(k, x);
                if rec.cur_vid <= self.at {
                    found = Some(Object {
                        path: path.clone(),
                        kind: ObjectKind::Inner,
                        doc: rec.doc,
                        primary: None,
                    });
                }
            }

            if heads[1].as_ref() == Some(&x) {
                if found.is_none() {
                    found = self.delta_visible(&x, &path)?;
                }
                self.skip_delta_past(&x);
            }

            if heads[2].as_ref() == Some(&x) {
                let mut visible = None;
                while let Some(h) = head_path(&mut self.leaf, true)? {
                    if h != x {
                        break;
                    }
                    let (k, v) = self.leaf.next().unwrap()?;
                    if visible.is_none() {
                        let rec = decode_leaf(&k, &v)?;
                        if rec.create_vid <= self.at {
                            visible = Some(rec);
                        }
                    }
                }
                if found.is_none() {
                    if let Some(rec) = visible.filter(|r| r.visible_at(self.at)) {
                        found = Some(self.view.materialize_leaf(rec)?);
                    }
                }
            }

            if found.is_some() {
                return Ok(found);
            }
        }
    }

    fn delta_visible(&mut self, x: &[u8], path: &Path) -> Result<Option<Object>> {
        let (k, v) = match self.delta.peek() {
            Some(Ok(kv)) => kv.clone(),
            _ => return Ok(None),
        };
        let head = decode_delta(&k, &v)?;
        let rec = if head.start_vid <= self.at {
            Some(head)
        } else {
            let mut start = x.to_vec();
            start.push(SEP);
            start.extend_from_slice(&self.at.inverted_bytes());
            let mut end = x.to_vec();
            end.push(SEP + 1);
            match self.view.kv.range(Space::Delta, &start, Some(&end)).next() {
                Some(kv) => {
                    let (k, v) = kv?;
                    Some(decode_delta(&k, &v)?)
                }
                None => None,
            }
        };
        Ok(rec
            .filter(|r| r.start_vid <= self.at && self.at < r.end_vid)
            .map(|r| Object {
                path: path.clone(),
                kind: ObjectKind::Inner,
                doc: r.doc,
                primary: None,
            }))
    }

    fn skip_delta_past(&mut self, x: &[u8]) {
        let mut start = x.to_vec();
        start.push(SEP + 1);
        self.delta = self
            .view
            .kv
            .range(Space::Delta, &start, self.end.as_deref())
            .peekable();
    }
}

impl Iterator for ChildScan {
    type Item = Result<Object>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(o) => o.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

type Built = (Vec<BatchOp>, Vec<(Path, Document)>);

/// Writes below this size are encoded on the calling thread.
pub const PARALLEL_MIN: usize = 256;

/// Splits items into `n` groups by a hash of their parent path, keeping
/// the original order within each group.
pub fn partition_by_parent<'a, T>(items: &'a [T], n: usize, path: impl Fn(&T) -> &Path) -> Vec<Vec<&'a T>> {
    let n = n.max(1);
    let mut parts: Vec<Vec<&T>> = (0..n).map(|_| Vec::new()).collect();
    for it in items {
        let mut h = DefaultHasher::new();
        path(it).parent().hash(&mut h);
        parts[(h.finish() % n as u64) as usize].push(it);
    }
    parts
}

fn build_ops<'a>(view: &dyn KvView, writes: impl Iterator<Item = &'a StoreWrite>, vid: Vid) -> Result<Built> {
    let mut ops = Vec::new();
    let mut merged = Vec::new();
        for w in writes {
            match w {
                StoreWrite::PutInner { path, doc } => {
                    put_inner(view, &mut ops, path, doc, vid)?;
                }
                StoreWrite::MergeInner { path, delta } => {
                    let cur = read_snapshot(view, path)?.ok_or_else(|| {
                        PreconditionFailure::TargetMissing(path.clone())
                    })?;
                    let doc = apply_delta(&cur.doc, delta).map_err(|e| {
                        PreconditionFailure::InvalidMerge {
                            path: path.clone(),
                            reason: e.to_string(),
                        }
                    })?;
                    put_inner(view, &mut ops, path, &doc, vid)?;
                    merged.push((path.clone(), doc));
                }
                StoreWrite::RemoveInner { path } => {
                    let key = path.encode();
                    if let Some(cur) = read_snapshot(view, path)? {
                        ops.push(BatchOp::Put(
                            Space::Delta,
                            delta_key(path, cur.cur_vid),
                            encode_delta_value(vid, &cur.doc),
                        ));
                        ops.push(BatchOp::Delete(Space::Snapshot, key));
                    }
                }
                StoreWrite::AddLeaf { path, doc } => {
                    let rec = LeafRecord {
                        path: path.clone(),
                        create_vid: vid,
                        tombstone_vid: Vid::NEVER,
                        payload: LeafPayload::Primary(doc.clone()),
                    };
                    ops.push(BatchOp::Put(Space::Leaf, leaf_key(path, vid), encode_leaf_value(&rec)));
                }
                StoreWrite::AddAlias { path, primary } => {
                    let rec = LeafRecord {
                        path: path.clone(),
                        create_vid: vid,
                        tombstone_vid: Vid::NEVER,
                        payload: LeafPayload::Alias(primary.clone()),
                    };
                    ops.push(BatchOp::Put(Space::Leaf, leaf_key(path, vid), encode_leaf_value(&rec)));
                }
                StoreWrite::RemoveLeaf { path } => {
                    if let Some(mut rec) = latest_leaf(view, path)?.filter(LeafRecord::is_live) {
                        rec.tombstone_vid = vid;
                        ops.push(BatchOp::Put(
                            Space::Leaf,
                            leaf_key(path, rec.create_vid),
                            encode_leaf_value(&rec),
                        ));
                    }
                }
            }
        }
    Ok((ops, merged))
}

fn put_inner(view: &dyn KvView, ops: &mut Vec<BatchOp>, path: &Path, doc: &Document, vid: Vid) -> Result<()> {
    let prev = read_snapshot(view, path)?;
    let delta_vid = match prev {
        Some(cur) => {
            ops.push(BatchOp::Put(
                Space::Delta,
                delta_key(path, cur.cur_vid),
                encode_delta_value(vid, &cur.doc),
            ));
            cur.cur_vid
        }
        None => Vid::NEVER,
    };
    ops.push(BatchOp::Put(
        Space::Snapshot,
        path.encode(),
        encode_snapshot_value(delta_vid, vid, doc),
    ));
    Ok(())
}

fn read_snapshot(view: &dyn KvView, path: &Path) -> Result<Option<SnapshotRecord>> {
    view.get(Space::Snapshot, &path.encode())?
        .map(|v| decode_snapshot(&v))
        .transpose()
}

fn delta_at(view: &dyn KvView, path: &Path, at: Vid) -> Result<Option<DeltaRecord>> {
    let start = delta_key(path, at);
    let mut end = path.encode();
    end.push(SEP + 1);
    match view.range(Space::Delta, &start, Some(&end)).next() {
        None => Ok(None),
        Some(kv) => {
            let (k, v) = kv?;
            let rec = decode_delta(&k, &v)?;
            Ok((rec.start_vid <= at && at < rec.end_vid).then_some(rec))
        }
    }
}

fn leaf_records(view: &dyn KvView, path: &Path) -> Result<Vec<LeafRecord>> {
    let mut prefix = path.encode();
    prefix.push(SEP);
    let end = prefix_successor(&prefix);
    view.range(Space::Leaf, &prefix, end.as_deref())
        .map(|kv| kv.and_then(|(k, v)| decode_leaf(&k, &v)))
        .collect()
}

fn latest_leaf(view: &dyn KvView, path: &Path) -> Result<Option<LeafRecord>> {
    let mut prefix = path.encode();
    prefix.push(SEP);
    let end = prefix_successor(&prefix);
    view.range(Space::Leaf, &prefix, end.as_deref())
        .next()
        .map(|kv| kv.and_then(|(k, v)| decode_leaf(&k, &v)))
        .transpose()
}

fn suffixed_key(path: &Path, vid: Vid) -> Vec<u8> {
    let mut k = path.encode();
    k.push(SEP);
    k.extend_from_slice(&vid.inverted_bytes());
    k
}

pub(crate) fn delta_key(path: &Path, start_vid: Vid) -> Vec<u8> {
    suffixed_key(path, start_vid)
}

pub(crate) fn leaf_key(path: &Path, create_vid: Vid) -> Vec<u8> {
    suffixed_key(path, create_vid)
}

fn strip_suffix(key: &[u8]) -> Result<&[u8]> {
    if key.len() < 11 || key[key.len() - 9] != SEP {
        return Err(Error::Corruption("malformed versioned key".into()));
    }
    Ok(&key[..key.len() - 9])
}

fn split_suffixed(key: &[u8]) -> Result<(Path, Vid)> {
    let p = strip_suffix(key)?;
    let mut inv = [0u8; 8];
    inv.copy_from_slice(&key[key.len() - 8..]);
    Ok((Path::decode(p)?, Vid::from_inverted_bytes(inv)))
}

fn read_u64(b: &[u8], at: usize) -> Result<u64> {
    b.get(at..at + 8)
        .map(|s| u64::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Corruption("truncated record".into()))
}

fn encode_snapshot_value(delta_vid: Vid, cur_vid: Vid, doc: &Document) -> Vec<u8> {
    let mut v = Vec::with_capacity(64);
    v.extend_from_slice(&delta_vid.0.to_be_bytes());
    v.extend_from_slice(&cur_vid.0.to_be_bytes());
    doc.encode_into(&mut v);
    v
}

fn decode_snapshot(v: &[u8]) -> Result<SnapshotRecord> {
    Ok(SnapshotRecord {
        delta_vid: Vid(read_u64(v, 0)?),
        cur_vid: Vid(read_u64(v, 8)?),
        doc: Document::decode(&v[16..])?,
    })
}

fn encode_delta_value(end_vid: Vid, doc: &Document) -> Vec<u8> {
    let mut v = Vec::with_capacity(64);
    v.extend_from_slice(&end_vid.0.to_be_bytes());
    doc.encode_into(&mut v);
    v
}

fn decode_delta(k: &[u8], v: &[u8]) -> Result<DeltaRecord> {
    let (path, start_vid) = split_suffixed(k)?;
    Ok(DeltaRecord {
        path,
        start_vid,
        end_vid: Vid(read_u64(v, 0)?),
        doc: Document::decode(&v[8..])?,
    })
}

const LEAF_PRIMARY: u8 = 0;
const LEAF_ALIAS: u8 = 1;

fn encode_leaf_value(rec: &LeafRecord) -> Vec<u8> {
    let mut v = Vec::with_capacity(64);
    v.extend_from_slice(&rec.tombstone_vid.0.to_be_bytes());
    match &rec.payload {
        LeafPayload::Primary(doc) => {
            v.push(LEAF_PRIMARY);
            doc.encode_into(&mut v);
        }
        LeafPayload::Alias(r) => {
            v.push(LEAF_ALIAS);
            v.extend_from_slice(&r.create_vid.0.to_be_bytes());
            r.path.encode_into(&mut v);
        }
    }
    v
}

fn decode_leaf(k: &[u8], v: &[u8]) -> Result<LeafRecord> {
    let (path, create_vid) = split_suffixed(k)?;
    let tombstone_vid = Vid(read_u64(v, 0)?);
    let payload = match v.get(8) {
        Some(&LEAF_PRIMARY) => LeafPayload::Primary(Document::decode(&v[9..])?),
        Some(&LEAF_ALIAS) => LeafPayload::Alias(LeafRef {
            create_vid: Vid(read_u64(v, 9)?),
            path: Path::decode(&v[17..])?,
        }),
        _ => return Err(Error::Corruption("bad leaf record tag".into())),
    };
    Ok(LeafRecord {
        path,
        create_vid,
        tombstone_vid,
        payload,
    })
}
