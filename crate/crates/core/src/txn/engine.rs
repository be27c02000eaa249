use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Bound;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use crossbeam_skiplist::SkipMap;
use dashmap::DashMap;
use parking_lot::{Condvar, Mutex};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::history::{History, ImageLog, ObjectLog, ScanLog, TxnLog};
use super::locks::{LockMode, LockTable, TxnId};
use super::prepare::{check, preprocess, Checked, WritePlan};
use super::{WriteKind, WriteOp};
use crate::error::{Error, Result};
use crate::path::{IdBounds, Path, Vid};
use crate::query::{parse_query, plan_query, ExecPlan, Executor, PlanNode, Predicate, ScanEntry, ScanHook};
use crate::store::{Object, ObjectKind, Store, StoreWrite, PARALLEL_MIN};

/// Concurrency control scheme for read-write transactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Optimistic scan-range locking confirmed by precision locking.
    #[default]
    Ospl,
    /// Optimistic scan-range locking on child-id ranges only.
    Osl,
    /// Strict two-phase multiple-granularity locking.
    Mgl,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ospl, Scheme::Osl, Scheme::Mgl];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ospl => "ospl",
            Scheme::Osl => "osl",
            Scheme::Mgl => "mgl",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ospl" => Ok(Scheme::Ospl),
            "osl" => Ok(Scheme::Osl),
            "mgl" => Ok(Scheme::Mgl),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// On-disk location; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub scheme: Scheme,
    pub workers_validate: usize,
    pub workers_write: usize,
    /// Query result batch size.
    pub batch_size: usize,
    pub lock_timeout: Duration,
    /// Most transactions sharing one log sync.
    pub max_group: usize,
    /// Background watermark collection period; `None` disables the thread.
    pub gc_interval: Option<Duration>,
    pub record_history: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            data_dir: None,
            scheme: Scheme::Ospl,
            workers_validate: 4,
            workers_write: 4,
            batch_size: crate::query::DEFAULT_BATCH_SIZE,
            lock_timeout: Duration::from_millis(100),
            max_group: 256,
            gc_interval: Some(Duration::from_millis(20)),
            record_history: false,
        }
    }
}

/// A validated write, kept until every transaction that could conflict
/// with it has finished.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub parent: Path,
    pub child: Path,
    pub vid: Vid,
    pub kind: WriteKind,
    pub leaf: bool,
    pub before: Option<crate::value::Document>,
    pub after: Option<crate::value::Document>,
}

impl LogRecord {
    /// Whether either image satisfies `pred`.
    pub fn touches(&self, pred: &Predicate) -> bool {
        let id = self.child.id().unwrap_or_default();
        [&self.before, &self.after]
            .into_iter()
            .flatten()
            .any(|d| pred.matches(id, d))
    }
}

type LogKey = (Path, Vid, Path);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub read_vid: Vid,
    pub active_txns: usize,
    pub watermark: Vid,
    pub scheme: Scheme,
    pub read_only: bool,
    pub commits: u64,
    pub aborts: u64,
    /// Commit groups made durable.
    pub groups: u64,
    pub syncs: u64,
    pub log_records: usize,
}

/// One scan performed by a transaction, with the vid it read at.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub entry: ScanEntry,
    pub at: Vid,
}

struct CommitJob {
    vid: Vid,
    writes: Vec<StoreWrite>,
    reply: Sender<Result<Vid>>,
    log: Option<TxnLog>,
}

enum Job {
    Commit(Box<CommitJob>),
    /// A vid whose transaction aborted during validation.
    Skip(Vid),
}

pub(crate) struct Shared {
    pub(crate) store: Store,
    pub(crate) config: EngineConfig,
    read_vid: AtomicU64,
    commit_vid: AtomicU64,
    applied: Mutex<Vid>,
    applied_cv: Condvar,
    /// The validation stage; owns the sender into the write stage.
    validation: Mutex<Option<Sender<Job>>>,
    version_map: DashMap<Path, Vid>,
    log_index: SkipMap<LogKey, Arc<LogRecord>>,
    gc_queue: Mutex<VecDeque<(Vid, Vec<LogKey>)>>,
    sessions: Mutex<BTreeSet<(Vid, TxnId)>>,
    next_txn: AtomicU64,
    failed: AtomicBool,
    locks: LockTable,
    history: Option<Mutex<History>>,
    validate_pool: ThreadPool,
    write_pool: ThreadPool,
    commits: AtomicU64,
    aborts: AtomicU64,
    groups: AtomicU64,
    pub(crate) snapshot_lock: Mutex<()>,
}

struct Workers {
    shared: Arc<Shared>,
    stop_gc: Option<Sender<()>>,
    threads: Vec<JoinHandle<()>>,
}

impl Drop for Workers {
    fn drop(&mut self) {
        self.shared.validation.lock().take();
        self.stop_gc.take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Handle to a running engine. Clones share the engine; the pipeline
/// threads stop when the last clone is dropped.
#[derive(Clone)]
pub struct Engine {
    pub(crate) shared: Arc<Shared>,
    _workers: Arc<Mutex<Workers>>,
}

fn pool(n: usize, name: &'static str) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .thread_name(move |i| format!("arbor-{name}-{i}"))
        .build()
        .map_err(|e| Error::Storage(format!("thread pool: {e}")))
}

impl Engine {
    pub fn open(config: EngineConfig) -> Result<Engine> {
        let store = match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::memory(),
        };
        Self::with_store(store, config)
    }

    /// In-memory engine with default settings.
    pub fn memory() -> Engine {
        Self::open(EngineConfig::default()).expect("memory engine")
    }

    pub fn with_store(store: Store, config: EngineConfig) -> Result<Engine> {
        let last = store.last_vid()?;
        let history = if config.record_history {
            let initial = store
                .view()
                .descendants(&Path::root(), last)?
                .into_iter()
                .map(|o| ObjectLog {
                    leaf: o.kind == ObjectKind::Leaf,
                    doc: o.doc.to_json(),
                    path: o.path,
                })
                .collect();
            Some(Mutex::new(History {
                start_vid: last,
                initial,
                txns: Vec::new(),
            }))
        } else {
            None
        };
        let (tx, rx) = crossbeam_channel::unbounded();
        let shared = Arc::new(Shared {
            store,
            read_vid: AtomicU64::new(last.0),
            commit_vid: AtomicU64::new(last.0),
            applied: Mutex::new(last),
            applied_cv: Condvar::new(),
            validation: Mutex::new(Some(tx)),
            version_map: DashMap::new(),
            log_index: SkipMap::new(),
            gc_queue: Mutex::new(VecDeque::new()),
            sessions: Mutex::new(BTreeSet::new()),
            next_txn: AtomicU64::new(1),
            failed: AtomicBool::new(false),
            locks: LockTable::new(config.lock_timeout),
            history,
            validate_pool: pool(config.workers_validate, "validate")?,
            write_pool: pool(config.workers_write, "write")?,
            commits: AtomicU64::new(0),
            aborts: AtomicU64::new(0),
            groups: AtomicU64::new(0),
            snapshot_lock: Mutex::new(()),
            config,
        });
        let mut threads = Vec::new();
        let sh = shared.clone();
        threads.push(
            std::thread::Builder::new()
                .name("arbor-write".into())
                .spawn(move || write_loop(&sh, rx))?,
        );
        let mut stop_gc = None;
        if let Some(every) = shared.config.gc_interval {
            let (stop, stopped) = crossbeam_channel::bounded::<()>(0);
            stop_gc = Some(stop);
            let sh = shared.clone();
            threads.push(std::thread::Builder::new().name("arbor-gc".into()).spawn(move || {
                while let Err(crossbeam_channel::RecvTimeoutError::Timeout) = stopped.recv_timeout(every) {
                    sh.gc_tick();
                }
            })?);
        }
        Ok(Engine {
            _workers: Arc::new(Mutex::new(Workers {
                shared: shared.clone(),
                stop_gc,
                threads,
            })),
            shared,
        })
    }

    pub fn store(&self) -> &Store {
        &self.shared.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    /// Latest vid safe for reads.
    pub fn read_vid(&self) -> Vid {
        self.shared.read_vid()
    }

    pub fn is_read_only(&self) -> bool {
        self.shared.failed.load(Ordering::SeqCst)
    }

    fn check_readable(&self, at: Vid) -> Result<()> {
        let rv = self.read_vid();
        if at > rv {
            return Err(Error::InvalidArgument(format!("vid {at} is beyond read_vid {rv}")));
        }
        Ok(())
    }

    pub fn get(&self, path: &Path, at: Vid) -> Result<Option<Object>> {
        self.check_readable(at)?;
        self.shared.store.get(path, at)
    }

    /// Runs a read-only query at `at`.
    pub fn query(&self, text: &str, at: Vid) -> Result<Vec<Object>> {
        let plan = plan_query(&parse_query(text)?).with_batch_size(self.shared.config.batch_size);
        self.execute(plan, at)?.collect_all()
    }

    /// Streaming read-only execution at `at`.
    pub fn execute(&self, plan: ExecPlan, at: Vid) -> Result<Executor<'_>> {
        self.check_readable(at)?;
        Ok(Executor::new(&self.shared.store, plan, at))
    }

    /// Starts a read-write transaction.
    pub fn begin(&self) -> Result<Txn> {
        let sh = &self.shared;
        if sh.failed.load(Ordering::SeqCst) {
            return Err(Error::ReadOnlyMode);
        }
        let id = sh.next_txn.fetch_add(1, Ordering::SeqCst);
        let read_vid = {
            let mut s = sh.sessions.lock();
            let rv = sh.read_vid();
            s.insert((rv, id));
            rv
        };
        Ok(Txn {
            shared: sh.clone(),
            id,
            read_vid,
            scans: Vec::new(),
            locks: Vec::new(),
            finished: false,
        })
    }

    /// Commits a write set without reads.
    pub fn commit(&self, ops: Vec<WriteOp>) -> Result<Vid> {
        self.begin()?.commit(ops)
    }

    pub fn watermark(&self) -> Vid {
        self.shared.watermark()
    }

    /// Drops validation state at or below the watermark; returns the watermark.
    pub fn gc_tick(&self) -> Vid {
        self.shared.gc_tick()
    }

    pub fn status(&self) -> Status {
        let sh = &self.shared;
        let active_txns = sh.sessions.lock().len();
        Status {
            read_vid: sh.read_vid(),
            active_txns,
            watermark: sh.watermark(),
            scheme: sh.config.scheme,
            read_only: self.is_read_only(),
            commits: sh.commits.load(Ordering::SeqCst),
            aborts: sh.aborts.load(Ordering::SeqCst),
            groups: sh.groups.load(Ordering::SeqCst),
            syncs: sh.store.sync_count(),
            log_records: sh.log_index.len(),
        }
    }

    /// Recorded history, when enabled in the config.
    pub fn history(&self) -> Option<History> {
        self.shared.history.as_ref().map(|h| h.lock().clone())
    }

    /// Number of (parent, vid) entries held for validation.
    pub fn version_map_len(&self) -> usize {
        self.shared.version_map.len()
    }

    #[cfg(test)]
    pub(crate) fn fail_for_test(&self) {
        self.shared.fail(&Error::Storage("injected".into()));
    }
}

/// Proper ancestors of `p`, root first.
fn ancestors(p: &Path) -> Vec<Path> {
    (0..p.depth())
        .map(|n| Path::from_components(&p.components()[..n]).expect("prefix of a valid path"))
        .collect()
}

fn hash_of(p: &Path) -> u64 {
    let mut h = DefaultHasher::new();
    p.hash(&mut h);
    h.finish()
}

/// Runs `f` over `items` on `pool`, one hash partition of `key` per
/// worker. Small inputs run inline. Output keeps input order.
fn run_partitioned<T, R, K, F>(pool: &ThreadPool, items: &[T], key: K, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    K: Fn(&T) -> &Path + Sync,
    F: Fn(&T) -> Result<R> + Sync,
{
    let n = pool.current_num_threads();
    if items.len() < PARALLEL_MIN || n < 2 {
        return items.iter().map(f).collect();
    }
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, it) in items.iter().enumerate() {
        parts[(hash_of(key(it)) % n as u64) as usize].push(i);
    }
    let done: Vec<Result<Vec<(usize, R)>>> = pool.install(|| {
        parts
            .par_iter()
            .map(|idx| idx.iter().map(|&i| f(&items[i]).map(|r| (i, r))).collect())
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for part in done {
        out.extend(part?);
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

impl Shared {
    fn read_vid(&self) -> Vid {
        Vid(self.read_vid.load(Ordering::SeqCst))
    }

    fn fail(&self, e: &Error) {
        if !self.failed.swap(true, Ordering::SeqCst) {
            tracing::error!("entering read-only mode: {e}");
        }
        self.applied_cv.notify_all();
    }

    fn set_applied(&self, vid: Vid) {
        let mut a = self.applied.lock();
        if *a < vid {
            *a = vid;
        }
        drop(a);
        self.applied_cv.notify_all();
    }

    fn wait_applied(&self, vid: Vid) -> Result<()> {
        let mut a = self.applied.lock();
        while *a < vid {
            if self.failed.load(Ordering::SeqCst) {
                return Err(Error::ReadOnlyMode);
            }
            self.applied_cv.wait(&mut a);
        }
        Ok(())
    }

    fn watermark(&self) -> Vid {
        let s = self.sessions.lock();
        let rv = self.read_vid();
        s.iter().next().map_or(rv, |(r, _)| (*r).min(rv))
    }

    fn gc_tick(&self) -> Vid {
        let wm = self.watermark();
        let mut expired = Vec::new();
        {
            let mut q = self.gc_queue.lock();
            while q.front().is_some_and(|(v, _)| *v <= wm) {
                expired.extend(q.pop_front());
            }
        }
        for (vid, keys) in expired {
            for k in keys {
                self.log_index.remove(&k);
                self.version_map.remove_if(&k.0, |_, v| *v <= vid);
            }
        }
        wm
    }

    fn records(&self, parent: &Path, after: Vid, before: Vid) -> impl Iterator<Item = Arc<LogRecord>> + '_ {
        let lo = (parent.clone(), after.next(), Path::root());
        let hi = (parent.clone(), before, Path::root());
        self.log_index
            .range((Bound::Included(lo), Bound::Excluded(hi)))
            .map(|e| e.value().clone())
    }

    fn on_scan(
        &self,
        txn: TxnId,
        scans: &mut Vec<ScanRecord>,
        locks: &mut Vec<Path>,
        entry: ScanEntry,
        at: Vid,
    ) -> Result<Vid> {
        let at = match self.config.scheme {
            Scheme::Ospl | Scheme::Osl => at,
            Scheme::Mgl => {
                // Point lookups lock the named child, bounded scans the id
                // range, and other scans the whole parent.
                let (target, mode) = match entry.bounds.exact_id() {
                    Some(id) => (entry.parent.child(id)?, LockMode::IS),
                    None if entry.bounds.is_all() => (entry.parent.clone(), LockMode::S),
                    None => (entry.parent.clone(), LockMode::IS),
                };
                for a in ancestors(&target) {
                    if self.locks.acquire(txn, &a, LockMode::IS)? {
                        locks.push(a);
                    }
                }
                if self.locks.acquire(txn, &target, mode)? {
                    locks.push(target);
                }
                if entry.bounds.exact_id().is_none() && !entry.bounds.is_all() {
                    self.locks.acquire_range(txn, &entry.parent, &entry.bounds)?;
                }
                self.read_vid()
            }
        };
        scans.push(ScanRecord { entry, at });
        Ok(at)
    }

    /// Validation stage: assigns the commit vid, re-checks preconditions
    /// at `vid - 1`, validates the scan set, installs the log records and
    /// hands the transaction to the write stage.
    fn validate(&self, txn: &Txn, plan: &WritePlan, ops: &[WriteOp]) -> Result<Receiver<Result<Vid>>> {
        let stage = self.validation.lock();
        let Some(jobs) = stage.as_ref() else {
            return Err(Error::Storage("engine is shut down".into()));
        };
        if self.failed.load(Ordering::SeqCst) {
            return Err(Error::ReadOnlyMode);
        }
        let vid = Vid(self.commit_vid.fetch_add(1, Ordering::SeqCst) + 1);
        let checked = match self.validate_at(vid, txn, plan) {
            Ok(c) => c,
            Err(e) => {
                let _ = jobs.send(Job::Skip(vid));
                return Err(e);
            }
        };
        let keys = run_partitioned(
            &self.validate_pool,
            &checked,
            |c| &c.path,
            |c| {
                let parent = c.path.parent().expect("non-root write");
                self.version_map
                    .entry(parent.clone())
                    .and_modify(|v| *v = (*v).max(vid))
                    .or_insert(vid);
                let key = (parent.clone(), vid, c.path.clone());
                self.log_index.insert(
                    key.clone(),
                    Arc::new(LogRecord {
                        parent,
                        child: c.path.clone(),
                        vid,
                        kind: c.kind,
                        leaf: c.leaf,
                        before: c.before.clone(),
                        after: c.after.clone(),
                    }),
                );
                Ok(key)
            },
        )?;
        if !keys.is_empty() {
            self.gc_queue.lock().push_back((vid, keys));
        }
        let log = self.history.as_ref().map(|_| TxnLog {
            txn_id: txn.id,
            read_vid: txn.read_vid,
            commit_vid: vid,
            scans: txn
                .scans
                .iter()
                .map(|s| ScanLog {
                    parent: s.entry.parent.clone(),
                    predicate: s.entry.predicate.to_string(),
                    at: s.at,
                })
                .collect(),
            writes: ops.iter().map(WriteOp::to_json).collect(),
            images: checked
                .iter()
                .map(|c| ImageLog {
                    path: c.path.clone(),
                    kind: c.kind,
                    leaf: c.leaf,
                    before: c.before.as_ref().map(|d| d.to_json()),
                    after: c.after.as_ref().map(|d| d.to_json()),
                })
                .collect(),
        });
        let (reply, replied) = crossbeam_channel::bounded(1);
        let job = CommitJob {
            vid,
            writes: checked.into_iter().map(|c| c.write).collect(),
            reply,
            log,
        };
        jobs.send(Job::Commit(Box::new(job)))
            .map_err(|_| Error::Storage("write stage stopped".into()))?;
        Ok(replied)
    }

    fn validate_at(&self, vid: Vid, txn: &Txn, plan: &WritePlan) -> Result<Vec<Checked>> {
        let prev = vid.prev();
        let applied = *self.applied.lock();
        if applied < prev {
            // Writes validated but not yet applied that touch these paths or
            // their parents make the store state stale; wait for them.
            let mut touched = HashSet::new();
            for w in &plan.writes {
                let parent = w.path.parent().expect("non-root write");
                if let Some(g) = parent.parent() {
                    touched.insert(g);
                }
                touched.insert(parent);
            }
            if touched.iter().any(|g| self.records(g, applied, vid).next().is_some()) {
                self.wait_applied(prev)?;
            }
        }
        let view = self.store.view();
        let base = |p: &Path| view.get(p, prev);
        let checked = run_partitioned(&self.validate_pool, &plan.writes, |w| &w.path, |w| {
            check(w, &plan.effects, &base)
        })?;
        if self.config.scheme != Scheme::Mgl {
            let subtree: Vec<ScanEntry> = plan
                .removed_inner
                .iter()
                .map(|d| ScanEntry {
                    parent: d.clone(),
                    level: 0,
                    predicate: Arc::new(Predicate::Wildcard),
                    bounds: IdBounds::all(),
                })
                .collect();
            let entries: Vec<(&ScanEntry, Vid)> = txn
                .scans
                .iter()
                .map(|s| (&s.entry, txn.read_vid))
                .chain(subtree.iter().map(|e| (e, plan.at)))
                .collect();
            run_partitioned(&self.validate_pool, &entries, |(e, _)| &e.parent, |(e, since)| {
                self.check_scan(e, *since, vid)
            })?;
        }
        Ok(checked)
    }

    fn check_scan(&self, e: &ScanEntry, since: Vid, vid: Vid) -> Result<()> {
        if !self.version_map.get(&e.parent).is_some_and(|v| *v > since) {
            return Ok(());
        }
        for r in self.records(&e.parent, since, vid) {
            let hit = match self.config.scheme {
                Scheme::Ospl => r.touches(&e.predicate),
                Scheme::Osl => e.bounds.contains(r.child.id().unwrap_or_default()),
                Scheme::Mgl => false,
            };
            if hit {
                return Err(Error::Conflict(format!(
                    "{} {} at vid {} intersects scan {} under {}",
                    r.kind, r.child, r.vid, e.predicate, e.parent
                )));
            }
        }
        Ok(())
    }
}

fn write_loop(sh: &Shared, jobs: Receiver<Job>) {
    while let Ok(first) = jobs.recv() {
        let mut group = vec![first];
        while group.len() < sh.config.max_group {
            match jobs.try_recv() {
                Ok(j) => group.push(j),
                Err(_) => break,
            }
        }
        let mut applied = Vec::new();
        for job in group {
            let vid = match job {
                Job::Skip(vid) => vid,
                Job::Commit(j) => {
                    let vid = j.vid;
                    if sh.failed.load(Ordering::SeqCst) {
                        let _ = j.reply.send(Err(Error::ReadOnlyMode));
                    } else {
                        match sh.store.apply_batch_with(&j.writes, vid, Some(&sh.write_pool)) {
                            Ok(_) => applied.push(j),
                            Err(e) => {
                                sh.fail(&e);
                                let _ = j.reply.send(Err(e));
                            }
                        }
                    }
                    vid
                }
            };
            sh.set_applied(vid);
        }
        let Some(last) = applied.last().map(|j| j.vid) else {
            continue;
        };
        match sh.store.flush_log() {
            Ok(()) => {
                sh.groups.fetch_add(1, Ordering::SeqCst);
                if let Some(h) = &sh.history {
                    let mut h = h.lock();
                    h.txns.extend(applied.iter_mut().filter_map(|j| j.log.take()));
                }
                sh.read_vid.store(last.0, Ordering::SeqCst);
                for j in applied {
                    let _ = j.reply.send(Ok(j.vid));
                }
            }
            Err(e) => {
                sh.fail(&e);
                for j in applied {
                    let _ = j.reply.send(Err(e.clone()));
                }
            }
        }
    }
}

/// A read-write transaction. Reads run at `read_vid` and are recorded for
/// validation; writes are buffered by the caller and submitted at commit.
/// Dropping an unfinished transaction aborts it.
pub struct Txn {
    shared: Arc<Shared>,
    id: TxnId,
    read_vid: Vid,
    scans: Vec<ScanRecord>,
    locks: Vec<Path>,
    finished: bool,
}

/// Scan hook binding an executor to a transaction.
pub struct TxnHook<'a> {
    shared: &'a Shared,
    txn: TxnId,
    scans: &'a mut Vec<ScanRecord>,
    locks: &'a mut Vec<Path>,
}

impl ScanHook for TxnHook<'_> {
    fn on_scan(&mut self, parent: &Path, node: &PlanNode, at: Vid) -> Result<Vid> {
        let entry = ScanEntry {
            parent: parent.clone(),
            level: node.level,
            predicate: node.predicate.clone(),
            bounds: node.bounds.clone(),
        };
        self.shared.on_scan(self.txn, self.scans, self.locks, entry, at)
    }
}

impl Txn {
    pub fn id(&self) -> TxnId {
        self.id
    }

    pub fn read_vid(&self) -> Vid {
        self.read_vid
    }

    pub fn scans(&self) -> &[ScanRecord] {
        &self.scans
    }

    pub fn query(&mut self, text: &str) -> Result<Vec<Object>> {
        let plan = plan_query(&parse_query(text)?).with_batch_size(self.shared.config.batch_size);
        self.execute(plan).collect_all()
    }

    pub fn execute(&mut self, plan: ExecPlan) -> Executor<'_, TxnHook<'_>> {
        let hook = TxnHook {
            shared: &self.shared,
            txn: self.id,
            scans: &mut self.scans,
            locks: &mut self.locks,
        };
        Executor::with_hook(&self.shared.store, plan, self.read_vid, hook)
    }

    /// Registers a scan of `parent`'s children made outside the query
    /// executor. Returns the vid to read at.
    pub fn record_scan(&mut self, parent: &Path, predicate: Arc<Predicate>, bounds: IdBounds) -> Result<Vid> {
        let entry = ScanEntry {
            parent: parent.clone(),
            level: 0,
            predicate,
            bounds,
        };
        self.shared
            .on_scan(self.id, &mut self.scans, &mut self.locks, entry, self.read_vid)
    }

    /// Validates and commits `ops`; returns the commit vid.
    pub fn commit(mut self, ops: Vec<WriteOp>) -> Result<Vid> {
        let res = self.commit_inner(&ops);
        let counter = match &res {
            Ok(_) => Some(&self.shared.commits),
            Err(e) if e.is_abort() => Some(&self.shared.aborts),
            Err(_) => None,
        };
        if let Some(c) = counter {
            c.fetch_add(1, Ordering::SeqCst);
        }
        self.finish();
        res
    }

    pub fn abort(mut self) {
        self.finish();
    }

    fn commit_inner(&mut self, ops: &[WriteOp]) -> Result<Vid> {
        if self.shared.failed.load(Ordering::SeqCst) {
            return Err(Error::ReadOnlyMode);
        }
        if self.shared.config.scheme == Scheme::Mgl {
            self.lock_writes(ops)?;
        }
        let at = self.shared.read_vid();
        let plan = preprocess(ops, &self.shared.store.view(), at)?;
        let replied = self.shared.validate(self, &plan, ops)?;
        replied
            .recv()
            .map_err(|_| Error::Storage("write stage stopped".into()))?
    }

    fn lock_writes(&mut self, ops: &[WriteOp]) -> Result<()> {
        let mut want: BTreeMap<(usize, Path), LockMode> = BTreeMap::new();
        let mut add = |p: Path, m: LockMode| {
            want.entry((p.depth(), p))
                .and_modify(|cur| *cur = cur.join(m))
                .or_insert(m);
        };
        for op in ops {
            for a in ancestors(op.path()) {
                add(a, LockMode::IX);
            }
            add(op.path().clone(), LockMode::X);
        }
        for ((_, path), mode) in want {
            if self.shared.locks.acquire(self.id, &path, mode)? {
                self.locks.push(path);
            }
        }
        Ok(())
    }

    fn finish(&mut self) {
        if self.finished {
            return;
        }
        self.finished = true;
        self.shared.sessions.lock().remove(&(self.read_vid, self.id));
        self.shared.locks.release_all(self.id, &self.locks);
        self.locks.clear();
    }
}

impl Drop for Txn {
    fn drop(&mut self) {
        self.finish();
    }
}
