//! Batch-iterator execution of a plan: a chain of nodes where node `i`
//! pulls context objects from node `i-1` and scans their children.

use std::collections::VecDeque;
use std::sync::Arc;

use super::plan::{ExecPlan, PlanNode};
use super::Predicate;
use crate::error::Result;
use crate::path::{IdBounds, Path, Vid};
use crate::store::{ChildScan, Object, ObjectKind, Store};

/// One scanned range: the context parent and the level's predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub parent: Path,
    pub level: usize,
    pub predicate: Arc<Predicate>,
    pub bounds: IdBounds,
}

/// Called before every child scan; returns the vid the scan reads at.
pub trait ScanHook {
    fn on_scan(&mut self, parent: &Path, node: &PlanNode, at: Vid) -> Result<Vid>;
}

pub struct NoHook;

impl ScanHook for NoHook {
    fn on_scan(&mut self, _: &Path, _: &PlanNode, at: Vid) -> Result<Vid> {
        Ok(at)
    }
}

#[derive(Debug, Default, Clone)]
pub struct ScanRecorder {
    pub entries: Vec<ScanEntry>,
}

impl ScanHook for ScanRecorder {
    fn on_scan(&mut self, parent: &Path, node: &PlanNode, at: Vid) -> Result<Vid> {
        self.entries.push(ScanEntry {
            parent: parent.clone(),
            level: node.level,
            predicate: node.predicate.clone(),
            bounds: node.bounds.clone(),
        });
        Ok(at)
    }
}

impl<H: ScanHook + ?Sized> ScanHook for &mut H {
    fn on_scan(&mut self, parent: &Path, node: &PlanNode, at: Vid) -> Result<Vid> {
        (**self).on_scan(parent, node, at)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ExecStats {
    /// Child-scan calls (one range seek each).
    pub seeks: u64,
    /// Objects read by child scans.
    pub scanned: u64,
    pub scanned_per_level: Vec<u64>,
    pub emitted: u64,
}

#[derive(Default)]
struct NodeState {
    buf: VecDeque<Object>,
    cur: Option<ChildScan>,
    done: bool,
}

pub struct Executor<'a, H: ScanHook = NoHook> {
    store: &'a Store,
    at: Vid,
    plan: ExecPlan,
    hook: H,
    nodes: Vec<NodeState>,
    root_taken: bool,
    stats: ExecStats,
    failed: bool,
}

impl<'a> Executor<'a, NoHook> {
    pub fn new(store: &'a Store, plan: ExecPlan, at: Vid) -> Self {
        Self::with_hook(store, plan, at, NoHook)
    }
}

impl<'a, H: ScanHook> Executor<'a, H> {
    pub fn with_hook(store: &'a Store, plan: ExecPlan, at: Vid, hook: H) -> Self {
        let n = plan.nodes.len();
        Executor {
            store,
            at,
            plan,
            hook,
            nodes: (0..n).map(|_| NodeState::default()).collect(),
            root_taken: false,
            stats: ExecStats {
                scanned_per_level: vec![0; n],
                ..ExecStats::default()
            },
            failed: false,
        }
    }

    pub fn stats(&self) -> &ExecStats {
        &self.stats
    }

    pub fn hook(&self) -> &H {
        &self.hook
    }

    pub fn into_hook(self) -> H {
        self.hook
    }

    /// Next batch of at most `batch_size` results, or `None` when done.
    pub fn next_batch(&mut self) -> Result<Option<Vec<Object>>> {
        if self.failed || self.nodes.is_empty() {
            return Ok(None);
        }
        let last = self.nodes.len() - 1;
        if let Err(e) = self.fill(last) {
            self.failed = true;
            return Err(e);
        }
        let out: Vec<Object> = self.nodes[last].buf.drain(..).collect();
        self.stats.emitted += out.len() as u64;
        Ok(if out.is_empty() { None } else { Some(out) })
    }

    /// Runs to completion and collects every result.
    pub fn collect_all(&mut self) -> Result<Vec<Object>> {
        let mut out = Vec::new();
        while let Some(b) = self.next_batch()? {
            out.extend(b);
        }
        Ok(out)
    }

    fn fill(&mut self, i: usize) -> Result<()> {
        let batch = self.plan.batch_size;
        let last = i + 1 == self.nodes.len();
        while self.nodes[i].buf.len() < batch && !self.nodes[i].done {
            if let Some(scan) = self.nodes[i].cur.as_mut() {
                match scan.next() {
                    Some(obj) => {
                        let obj = obj?;
                        self.stats.scanned += 1;
                        self.stats.scanned_per_level[i] += 1;
                        if !last && obj.kind == ObjectKind::Leaf {
                            continue;
                        }
                        let id = obj.path.id().unwrap_or_default();
                        if self.plan.nodes[i].predicate.matches(id, &obj.doc) {
                            self.nodes[i].buf.push_back(obj);
                        }
                    }
                    None => self.nodes[i].cur = None,
                }
                continue;
            }
            let parent = if i == 0 {
                if self.root_taken {
                    self.nodes[i].done = true;
                    continue;
                }
                self.root_taken = true;
                Path::root()
            } else {
                if self.nodes[i - 1].buf.is_empty() {
                    self.fill(i - 1)?;
                }
                match self.nodes[i - 1].buf.pop_front() {
                    Some(o) => o.path,
                    None => {
                        self.nodes[i].done = true;
                        continue;
                    }
                }
            };
            let node = &self.plan.nodes[i];
            let at = self.hook.on_scan(&parent, node, self.at)?;
            self.stats.seeks += 1;
            self.nodes[i].cur = Some(self.store.scan_children(&parent, at, &node.bounds));
        }
        Ok(())
    }
}

impl<H: ScanHook> Iterator for Executor<'_, H> {
    type Item = Result<Object>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.nodes.is_empty() {
            return None;
        }
        let last = self.nodes.len() - 1;
        if self.nodes[last].buf.is_empty() {
            if let Err(e) = self.fill(last) {
                self.failed = true;
                return Some(Err(e));
            }
        }
        let o = self.nodes[last].buf.pop_front()?;
        self.stats.emitted += 1;
        Some(Ok(o))
    }
}
