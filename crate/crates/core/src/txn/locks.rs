//! Multiple-granularity lock table for the pessimistic scheme, with shared
//! key-range locks over the children of one parent.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::error::{Error, Result};
use crate::path::{IdBounds, Path};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LockMode {
    IS,
    IX,
    S,
    SIX,
    X,
}

impl LockMode {
    pub fn compatible(self, other: LockMode) -> bool {
        use LockMode::*;
        matches!(
            (self, other),
            (IS, IS | IX | S | SIX) | (IX, IS | IX) | (S, IS | S) | (SIX, IS)
        )
    }

    /// Weakest mode covering both.
    pub fn join(self, other: LockMode) -> LockMode {
        use LockMode::*;
        match (self, other) {
            (a, b) if a == b => a,
            (X, _) | (_, X) => X,
            (SIX, _) | (_, SIX) => SIX,
            (S, IX) | (IX, S) => SIX,
            (IS, b) => b,
            (a, IS) => a,
            _ => unreachable!(),
        }
    }
}

pub type TxnId = u64;

#[derive(Default)]
struct Entry {
    holders: Vec<(TxnId, LockMode)>,
    /// Pending upgrades first, then new requests in arrival order. A new
    /// request is granted only when it is compatible with the holders and
    /// with every request queued before it.
    waiting: Vec<Waiter>,
}

struct Waiter {
    ticket: u64,
    mode: LockMode,
    upgrade: bool,
}

impl Entry {
    fn is_empty(&self) -> bool {
        self.holders.is_empty() && self.waiting.is_empty()
    }
}

#[derive(Default)]
struct Tables {
    paths: HashMap<Path, Entry>,
    /// Shared range locks by parent. Each covers every child id in its
    /// bounds, present or not.
    ranges: HashMap<Path, Vec<(TxnId, IdBounds)>>,
}

impl Tables {
    /// Whether range locks of other transactions admit `mode` on `path`.
    fn ranges_admit(&self, txn: TxnId, path: &Path, mode: LockMode) -> bool {
        let (Some(parent), Some(id)) = (path.parent(), path.id()) else {
            return true;
        };
        self.ranges.get(&parent).is_none_or(|rs| {
            rs.iter()
                .all(|(t, b)| *t == txn || !b.contains(id) || LockMode::S.compatible(mode))
        })
    }
}

pub struct LockTable {
    held: Mutex<Tables>,
    cv: Condvar,
    timeout: Duration,
    next_ticket: AtomicU64,
}

impl LockTable {
    pub fn new(timeout: Duration) -> Self {
        LockTable {
            held: Mutex::new(Tables::default()),
            cv: Condvar::new(),
            timeout,
            next_ticket: AtomicU64::new(0),
        }
    }

    /// Blocks until `txn` holds at least `mode` on `path`. Returns true when
    /// the lock is new to `txn` (it must be released later). Upgrades of a
    /// held lock wait only for the holders, and new requests queue behind
    /// them.
    pub fn acquire(&self, txn: TxnId, path: &Path, mode: LockMode) -> Result<bool> {
        let deadline = Instant::now() + self.timeout;
        let mut held = self.held.lock();
        let mut ticket = None;
        loop {
            let ranges_ok = held.ranges_admit(txn, path, mode);
            let e = held.paths.entry(path.clone()).or_default();
            let mine = e.holders.iter().position(|(t, _)| *t == txn);
            let want = mine.map_or(mode, |i| e.holders[i].1.join(mode));
            if mine.is_some_and(|i| e.holders[i].1 == want) {
                return Ok(false);
            }
            let t = *ticket.get_or_insert_with(|| {
                let t = self.next_ticket.fetch_add(1, Ordering::Relaxed);
                let upgrade = mine.is_some();
                let at = if upgrade {
                    e.waiting.iter().take_while(|w| w.upgrade).count()
                } else {
                    e.waiting.len()
                };
                e.waiting.insert(at, Waiter { ticket: t, mode: want, upgrade });
                t
            });
            let free = e.holders.iter().all(|(h, m)| *h == txn || m.compatible(want));
            let ahead_ok = mine.is_some()
                || e.waiting
                    .iter()
                    .take_while(|w| w.ticket != t)
                    .all(|w| w.mode.compatible(want));
            if free && ahead_ok && ranges_ok {
                e.waiting.retain(|w| w.ticket != t);
                match mine {
                    Some(i) => {
                        e.holders[i].1 = want;
                        return Ok(false);
                    }
                    None => {
                        e.holders.push((txn, want));
                        // Later compatible waiters may now proceed too.
                        self.cv.notify_all();
                        return Ok(true);
                    }
                }
            }
            if self.cv.wait_until(&mut held, deadline).timed_out() {
                if let Some(e) = held.paths.get_mut(path) {
                    e.waiting.retain(|w| w.ticket != t);
                    if e.is_empty() {
                        held.paths.remove(path);
                    }
                }
                drop(held);
                self.cv.notify_all();
                return Err(Error::LockTimeout(path.clone()));
            }
        }
    }

    /// Blocks until `txn` holds a shared lock on every child of `parent`
    /// whose id lies in `bounds`.
    pub fn acquire_range(&self, txn: TxnId, parent: &Path, bounds: &IdBounds) -> Result<()> {
        let deadline = Instant::now() + self.timeout;
        let mut held = self.held.lock();
        loop {
            let blocked = held.paths.iter().any(|(p, e)| {
                p.parent().as_ref() == Some(parent)
                    && bounds.contains(p.id().unwrap_or_default())
                    && (e.holders.iter().any(|(t, m)| *t != txn && !m.compatible(LockMode::S))
                        || e.waiting.iter().any(|w| !w.upgrade && !w.mode.compatible(LockMode::S)))
            });
            if !blocked {
                let rs = held.ranges.entry(parent.clone()).or_default();
                if !rs.iter().any(|(t, b)| *t == txn && b == bounds) {
                    rs.push((txn, bounds.clone()));
                }
                return Ok(());
            }
            if self.cv.wait_until(&mut held, deadline).timed_out() {
                return Err(Error::LockTimeout(parent.clone()));
            }
        }
    }

    /// Releases the locks `txn` holds on `paths` and all its range locks.
    pub fn release_all(&self, txn: TxnId, paths: &[Path]) {
        let mut held = self.held.lock();
        for p in paths {
            if let Some(e) = held.paths.get_mut(p) {
                e.holders.retain(|(t, _)| *t != txn);
                if e.is_empty() {
                    held.paths.remove(p);
                }
            }
        }
        held.ranges.retain(|_, rs| {
            rs.retain(|(t, _)| *t != txn);
            !rs.is_empty()
        });
        drop(held);
        self.cv.notify_all();
    }

    pub fn held_by(&self, txn: TxnId) -> Vec<(Path, LockMode)> {
        let held = self.held.lock();
        let mut out: Vec<_> = held
            .paths
            .iter()
            .filter_map(|(p, e)| e.holders.iter().find(|(t, _)| *t == txn).map(|(_, m)| (p.clone(), *m)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
