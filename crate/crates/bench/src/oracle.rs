//! Offline conflict-serializability checker.
//!
//! Replays a recorded history on a plain in-memory model (independently of
//! the engine's storage and validation code), cross-checks the recorded
//! before/after images against the replay, and builds a precedence graph
//! with item and predicate dependencies found by re-evaluating every
//! recorded predicate read over every version of every child of the scanned
//! parent.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use arbor_core::query::{parse_predicate, Predicate};
use arbor_core::txn::{History, TxnLog};
use arbor_core::{Document, Path, Vid};
use petgraph::algo::{tarjan_scc, toposort};
use petgraph::graph::{DiGraph, NodeIndex};
use serde_json::{Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("incomplete history: {0}")]
    Incomplete(String),
    #[error("recorded images disagree with replay: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepKind {
    /// Consecutive writers of one object.
    WriteWrite,
    /// Reader saw a matching version installed by the writer.
    WriteRead,
    /// Reader saw a version the writer later replaced.
    ReadWrite,
    /// Writer later changed whether an object matches the reader's
    /// predicate.
    PredicateReadWrite,
}

/// One precedence edge between committed transactions, by position in
/// commit order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dependency {
    pub from: usize,
    pub to: usize,
    pub kind: DepKind,
    pub path: Path,
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{} -{:?}-> T{} on {}", self.from, self.kind, self.to, self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub txns: usize,
    pub edges: usize,
    /// Edges pointing from a later committer to an earlier one.
    pub backward: Vec<Dependency>,
    /// A dependency cycle, if one exists.
    pub cycle: Option<Vec<Dependency>>,
}

impl Report {
    pub fn is_serializable(&self) -> bool {
        self.cycle.is_none()
    }
}

#[derive(Debug, Clone)]
struct Version {
    vid: Vid,
    /// Index in commit order; `None` for the initial state.
    writer: Option<usize>,
    doc: Option<(Json, Document)>,
}

#[derive(Default)]
struct Model {
    chains: BTreeMap<Path, Vec<Version>>,
    children: BTreeMap<Path, BTreeSet<Path>>,
}

impl Model {
    fn current(&self, p: &Path) -> Option<&Json> {
        self.chains.get(p)?.last()?.doc.as_ref().map(|(j, _)| j)
    }

    fn at(&self, p: &Path, vid: Vid) -> Option<&Json> {
        let chain = self.chains.get(p)?;
        let i = chain.partition_point(|v| v.vid <= vid);
        chain.get(i.checked_sub(1)?)?.doc.as_ref().map(|(j, _)| j)
    }

    fn live_descendants(&self, root: &Path) -> Vec<Path> {
        self.chains
            .iter()
            .filter(|(p, c)| p.is_descendant_of(root) && c.last().is_some_and(|v| v.doc.is_some()))
            .map(|(p, _)| p.clone())
            .collect()
    }

    fn install(&mut self, p: &Path, vid: Vid, writer: Option<usize>, doc: Option<Json>) -> Result<(), OracleError> {
        let doc = match doc {
            Some(j) => {
                let d = Document::from_json(&j)
                    .map_err(|e| OracleError::Incomplete(format!("document for {p}: {e}")))?;
                Some((j, d))
            }
            None => None,
        };
        if let Some(parent) = p.parent() {
            self.children.entry(parent).or_default().insert(p.clone());
        }
        self.chains.entry(p.clone()).or_default().push(Version { vid, writer, doc });
        Ok(())
    }
}

/// Applies a delta in wire form to a document in wire form.
fn merge_json(base: &Json, delta: &Json) -> Result<Json, String> {
    fn collect(prefix: &str, m: &Map<String, Json>, out: &mut Vec<(String, String, Json)>) -> Result<(), String> {
        for (k, v) in m {
            let field = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            let inner = v.as_object().ok_or_else(|| format!("{field}: not an op"))?;
            if inner.len() == 2 && inner.contains_key("op") && inner.contains_key("val") {
                let op = inner["op"].as_str().ok_or("op must be a string")?.to_string();
                out.push((field, op, inner["val"].clone()));
            } else {
                collect(&field, inner, out)?;
            }
        }
        Ok(())
    }
    let mut ops = Vec::new();
    collect("", delta.as_object().ok_or("delta must be an object")?, &mut ops)?;
    let mut doc = base.clone();
    for (field, op, val) in ops {
        let mut slot = &mut doc;
        for part in field.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| format!("missing field {field}"))?;
        }
        *slot = if let (Some(a), Some(b)) = (slot.as_i64(), val.as_i64()) {
            let r = match op.as_str() {
                "+" => a.checked_add(b),
                "-" => a.checked_sub(b),
                "min" => Some(a.min(b)),
                "max" => Some(a.max(b)),
                other => return Err(format!("unknown op {other}")),
            };
            Json::from(r.ok_or_else(|| format!("overflow on {field}"))?)
        } else if slot.is_f64() && val.is_f64() {
            let (a, b) = (slot.as_f64().unwrap(), val.as_f64().unwrap());
            Json::from(match op.as_str() {
                "+" => a + b,
                "-" => a - b,
                "min" => a.min(b),
                "max" => a.max(b),
                other => return Err(format!("unknown op {other}")),
            })
        } else {
            return Err(format!("non-numeric merge on {field}"));
        };
    }
    Ok(doc)
}

fn field<'a>(w: &'a Json, key: &str) -> Result<&'a str, OracleError> {
    w.get(key)
        .and_then(Json::as_str)
        .ok_or_else(|| OracleError::Incomplete(format!("write without {key:?}: {w}")))
}

fn parse_path(s: &str) -> Result<Path, OracleError> {
    Path::parse(s).map_err(|e| OracleError::Incomplete(format!("path {s:?}: {e}")))
}

/// The (before, after) of every object a transaction changes, derived from
/// its submitted write set against the model state.
fn replay_writes(model: &Model, t: &TxnLog) -> Result<BTreeMap<Path, (Option<Json>, Option<Json>)>, OracleError> {
    let mut out = BTreeMap::new();
    let bad = |msg: String| OracleError::Inconsistent(format!("txn {} at {}: {msg}", t.txn_id, t.commit_vid));
    for w in &t.writes {
        let path = parse_path(field(w, "path")?)?;
        let before = model.current(&path).cloned();
        let after = match field(w, "type")? {
            "add" | "update" => match w.get("alias") {
                Some(a) => {
                    let primary = parse_path(field(a, "path")?)?;
                    let vid = Vid(a.get("vid").and_then(Json::as_u64).unwrap_or(0));
                    Some(
                        model
                            .at(&primary, vid)
                            .cloned()
                            .ok_or_else(|| bad(format!("alias target {primary}@{vid} missing")))?,
                    )
                }
                None => Some(
                    w.get("value")
                        .cloned()
                        .ok_or_else(|| OracleError::Incomplete(format!("write without value: {w}")))?,
                ),
            },
            "merge" => {
                let base = before.as_ref().ok_or_else(|| bad(format!("merge target {path} missing")))?;
                Some(merge_json(base, w.get("value").unwrap_or(&Json::Null)).map_err(bad)?)
            }
            "remove" => {
                for d in model.live_descendants(&path) {
                    let b = model.current(&d).cloned();
                    out.insert(d, (b, None));
                }
                None
            }
            other => return Err(OracleError::Incomplete(format!("unknown write type {other:?}"))),
        };
        out.insert(path, (before, after));
    }
    Ok(out)
}

fn parse_pred(s: &str) -> Result<Predicate, OracleError> {
    parse_predicate(s).map_err(|e| OracleError::Incomplete(format!("predicate {s:?}: {e}")))
}

fn matches(pred: &Predicate, p: &Path, v: Option<&Version>) -> bool {
    match v.and_then(|v| v.doc.as_ref()) {
        Some((_, d)) => pred.matches(p.id().unwrap_or_default(), d),
        None => false,
    }
}

/// Replays `h` and checks its precedence graph for cycles.
pub fn check_serializable(h: &History) -> Result<Report, OracleError> {
    let mut model = Model::default();
    for o in &h.initial {
        model.install(&o.path, h.start_vid, None, Some(o.doc.clone()))?;
    }
    let mut last = h.start_vid;
    for (i, t) in h.txns.iter().enumerate() {
        if t.commit_vid <= last {
            return Err(OracleError::Incomplete(format!("commit vids not increasing at txn {}", t.txn_id)));
        }
        last = t.commit_vid;
        if !t.writes.is_empty() && t.images.is_empty() {
            return Err(OracleError::Incomplete(format!("txn {} has writes but no images", t.txn_id)));
        }
        let changes = replay_writes(&model, t)?;
        let recorded: BTreeMap<Path, (Option<Json>, Option<Json>)> = t
            .images
            .iter()
            .map(|im| (im.path.clone(), (im.before.clone(), im.after.clone())))
            .collect();
        if recorded != changes {
            return Err(OracleError::Inconsistent(format!(
                "txn {} at {}: recorded {:?} replayed {:?}",
                t.txn_id, t.commit_vid, recorded, changes
            )));
        }
        for (p, (_, after)) in changes {
            model.install(&p, t.commit_vid, Some(i), after)?;
        }
    }

    let mut deps: BTreeSet<(usize, usize, DepKind, Path)> = BTreeSet::new();
    for (p, chain) in &model.chains {
        for w in chain.windows(2) {
            if let (Some(a), Some(b)) = (w[0].writer, w[1].writer) {
                deps.insert((a, b, DepKind::WriteWrite, p.clone()));
            }
        }
    }
    let empty = BTreeSet::new();
    for (t, log) in h.txns.iter().enumerate() {
        for scan in &log.scans {
            let pred = parse_pred(&scan.predicate)?;
            for c in model.children.get(&scan.parent).unwrap_or(&empty) {
                let chain = &model.chains[c];
                let seen = chain.partition_point(|v| v.vid <= scan.at);
                let visible = seen.checked_sub(1).map(|i| &chain[i]);
                let read = matches(&pred, c, visible);
                if read {
                    if let Some(w) = visible.and_then(|v| v.writer).filter(|w| *w != t) {
                        deps.insert((w, t, DepKind::WriteRead, c.clone()));
                    }
                }
                for k in seen..chain.len() {
                    let Some(w) = chain[k].writer.filter(|w| *w != t) else {
                        continue;
                    };
                    let prev = k.checked_sub(1).map(|i| &chain[i]);
                    if matches(&pred, c, prev) != matches(&pred, c, Some(&chain[k])) {
                        deps.insert((t, w, DepKind::PredicateReadWrite, c.clone()));
                    }
                    if read && k == seen {
                        deps.insert((t, w, DepKind::ReadWrite, c.clone()));
                    }
                }
            }
        }
    }

    let deps: Vec<Dependency> = deps
        .into_iter()
        .filter(|(a, b, _, _)| a != b)
        .map(|(from, to, kind, path)| Dependency { from, to, kind, path })
        .collect();
    let mut g: DiGraph<usize, usize> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..h.txns.len()).map(|i| g.add_node(i)).collect();
    for (i, d) in deps.iter().enumerate() {
        g.add_edge(nodes[d.from], nodes[d.to], i);
    }
    let cycle = match toposort(&g, None) {
        Ok(_) => None,
        Err(c) => Some(cycle_through(&g, c.node_id(), &deps)),
    };
    Ok(Report {
        txns: h.txns.len(),
        edges: deps.len(),
        backward: deps.iter().filter(|d| d.from > d.to).cloned().collect(),
        cycle,
    })
}

/// A shortest cycle through `start`, which lies on some cycle.
fn cycle_through(g: &DiGraph<usize, usize>, start: NodeIndex, deps: &[Dependency]) -> Vec<Dependency> {
    let scc: BTreeSet<NodeIndex> = tarjan_scc(g)
        .into_iter()
        .find(|c| c.contains(&start))
        .map(|c| c.into_iter().collect())
        .unwrap_or_default();
    let mut via: HashMap<NodeIndex, (NodeIndex, usize)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for e in g.edges(n) {
            use petgraph::visit::EdgeRef;
            let m = e.target();
            if !scc.contains(&m) || via.contains_key(&m) {
                continue;
            }
            via.insert(m, (n, *e.weight()));
            if m == start {
                let mut out = Vec::new();
                let mut cur = start;
                loop {
                    let (prev, edge) = via[&cur];
                    out.push(deps[edge].clone());
                    cur = prev;
                    if cur == start {
                        break;
                    }
                }
                out.reverse();
                return out;
            }
            queue.push_back(m);
        }
    }
    Vec::new()
}
