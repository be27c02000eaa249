//! Write-set preprocessing: subtree expansion of removes and precondition
//! checks against a base state.
//!
//! A write set has set semantics: each path is written at most once, and a
//! write sees the base state overlaid with the final effect of every other
//! write in the same set (so `Add /a/b` may precede `Add /a`).

use std::collections::{HashMap, HashSet};

use crate::delta::{apply_delta, Delta};
use crate::error::{PreconditionFailure, Result};
use crate::path::{Path, Vid};
use crate::store::{LeafRef, Object, ObjectKind, StoreView, StoreWrite};
use crate::value::Document;

use super::{WriteKind, WriteOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Effect {
    Inner,
    Leaf,
    Gone,
}

#[derive(Debug, Clone)]
pub(crate) enum PlannedOp {
    AddInner(Document),
    AddLeaf(Document),
    AddAlias { primary: LeafRef, doc: Document },
    Upsert(Document),
    Merge(Delta),
    RemoveInner,
    RemoveLeaf,
}

#[derive(Debug, Clone)]
pub(crate) struct PlannedWrite {
    pub path: Path,
    pub kind: WriteKind,
    pub op: PlannedOp,
}

#[derive(Debug, Clone)]
pub(crate) struct WritePlan {
    pub writes: Vec<PlannedWrite>,
    pub effects: HashMap<Path, Effect>,
    /// Inner objects deleted by removes; their child ranges must stay
    /// unchanged until commit.
    pub removed_inner: Vec<Path>,
    /// Vid of the state the plan was built from.
    pub at: Vid,
}

/// A write that passed its preconditions, with exact images.
#[derive(Debug, Clone)]
pub(crate) struct Checked {
    pub path: Path,
    pub kind: WriteKind,
    pub leaf: bool,
    pub before: Option<Document>,
    pub after: Option<Document>,
    pub write: StoreWrite,
}

/// Expands removes against `view` at `at` and checks every precondition
/// there.
pub(crate) fn preprocess(ops: &[WriteOp], view: &StoreView, at: Vid) -> Result<WritePlan> {
    let mut writes = Vec::with_capacity(ops.len());
    let mut removed_inner = Vec::new();
    for op in ops {
        let path = op.path().clone();
        if path.is_root() {
            return Err(PreconditionFailure::RootWrite.into());
        }
        let kind = op.kind();
        match op {
            WriteOp::Add { value, leaf, .. } => writes.push(PlannedWrite {
                path,
                kind,
                op: if *leaf {
                    PlannedOp::AddLeaf(value.clone())
                } else {
                    PlannedOp::AddInner(value.clone())
                },
            }),
            WriteOp::Update { value, leaf, .. } => writes.push(PlannedWrite {
                path,
                kind,
                op: if *leaf {
                    PlannedOp::AddLeaf(value.clone())
                } else {
                    PlannedOp::Upsert(value.clone())
                },
            }),
            WriteOp::Merge { delta, .. } => writes.push(PlannedWrite {
                path,
                kind,
                op: PlannedOp::Merge(delta.clone()),
            }),
            WriteOp::Alias { primary, .. } => {
                let doc = view
                    .primary_doc(primary)?
                    .ok_or_else(|| PreconditionFailure::TargetMissing(primary.path.clone()))?;
                writes.push(PlannedWrite {
                    path,
                    kind,
                    op: PlannedOp::AddAlias {
                        primary: primary.clone(),
                        doc,
                    },
                });
            }
            WriteOp::Remove { .. } => {
                let obj = view
                    .get(&path, at)?
                    .ok_or_else(|| PreconditionFailure::TargetMissing(path.clone()))?;
                let mut subtree = vec![obj];
                if subtree[0].kind == ObjectKind::Inner {
                    subtree.extend(view.descendants(&path, at)?);
                }
                for o in subtree {
                    let op = match o.kind {
                        ObjectKind::Inner => {
                            removed_inner.push(o.path.clone());
                            PlannedOp::RemoveInner
                        }
                        ObjectKind::Leaf => PlannedOp::RemoveLeaf,
                    };
                    writes.push(PlannedWrite { path: o.path, kind, op });
                }
            }
        }
    }
    let mut seen = HashSet::with_capacity(writes.len());
    for w in &writes {
        if !seen.insert(&w.path) {
            return Err(PreconditionFailure::RepeatedPath(w.path.clone()).into());
        }
    }
    let effects = writes
        .iter()
        .filter_map(|w| {
            let e = match w.op {
                PlannedOp::AddInner(_) | PlannedOp::Upsert(_) => Effect::Inner,
                PlannedOp::AddLeaf(_) | PlannedOp::AddAlias { .. } => Effect::Leaf,
                PlannedOp::RemoveInner | PlannedOp::RemoveLeaf => Effect::Gone,
                PlannedOp::Merge(_) => return None,
            };
            Some((w.path.clone(), e))
        })
        .collect();
    let plan = WritePlan {
        writes,
        effects,
        removed_inner,
        at,
    };
    for w in &plan.writes {
        check(w, &plan.effects, &|p| view.get(p, at))?;
    }
    Ok(plan)
}

/// Checks one write against `base` overlaid with the plan's effects and
/// returns its images.
pub(crate) fn check(
    w: &PlannedWrite,
    effects: &HashMap<Path, Effect>,
    base: &dyn Fn(&Path) -> Result<Option<Object>>,
) -> Result<Checked> {
    let path = &w.path;
    let cur = base(path)?;
    let parent_ok = || -> Result<()> {
        let parent = path.parent().expect("non-root path");
        if parent.is_root() {
            return Ok(());
        }
        let state = match effects.get(&parent) {
            Some(e) => Some(*e),
            None => base(&parent)?.map(|o| match o.kind {
                ObjectKind::Inner => Effect::Inner,
                ObjectKind::Leaf => Effect::Leaf,
            }),
        };
        match state {
            Some(Effect::Inner) => Ok(()),
            Some(Effect::Leaf) => Err(PreconditionFailure::ParentIsLeaf(path.clone()).into()),
            Some(Effect::Gone) | None => Err(PreconditionFailure::ParentMissing(path.clone()).into()),
        }
    };
    let absent = |cur: &Option<Object>| -> Result<()> {
        match cur {
            Some(_) => Err(PreconditionFailure::DuplicatePath(path.clone()).into()),
            None => Ok(()),
        }
    };
    let fail = |f: PreconditionFailure| -> Result<Checked> { Err(f.into()) };
    let (leaf, before, after, write) = match &w.op {
        PlannedOp::AddInner(doc) => {
            absent(&cur)?;
            parent_ok()?;
            let write = StoreWrite::PutInner {
                path: path.clone(),
                doc: doc.clone(),
            };
            (false, None, Some(doc.clone()), write)
        }
        PlannedOp::AddLeaf(doc) => {
            absent(&cur)?;
            parent_ok()?;
            let write = StoreWrite::AddLeaf {
                path: path.clone(),
                doc: doc.clone(),
            };
            (true, None, Some(doc.clone()), write)
        }
        PlannedOp::AddAlias { primary, doc } => {
            absent(&cur)?;
            parent_ok()?;
            let write = StoreWrite::AddAlias {
                path: path.clone(),
                primary: primary.clone(),
            };
            (true, None, Some(doc.clone()), write)
        }
        PlannedOp::Upsert(doc) => {
            let before = match cur {
                Some(o) if o.kind == ObjectKind::Leaf => {
                    return fail(PreconditionFailure::LeafImmutable(path.clone()))
                }
                Some(o) => Some(o.doc),
                None => {
                    parent_ok()?;
                    None
                }
            };
            let write = StoreWrite::PutInner {
                path: path.clone(),
                doc: doc.clone(),
            };
            (false, before, Some(doc.clone()), write)
        }
        PlannedOp::Merge(delta) => {
            let before = match cur {
                None => return fail(PreconditionFailure::TargetMissing(path.clone())),
                Some(o) if o.kind == ObjectKind::Leaf => {
                    return fail(PreconditionFailure::LeafImmutable(path.clone()))
                }
                Some(o) => o.doc,
            };
            let after = apply_delta(&before, delta).map_err(|e| PreconditionFailure::InvalidMerge {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let write = StoreWrite::MergeInner {
                path: path.clone(),
                delta: delta.clone(),
            };
            (false, Some(before), Some(after), write)
        }
        PlannedOp::RemoveInner | PlannedOp::RemoveLeaf => {
            let want = match w.op {
                PlannedOp::RemoveInner => ObjectKind::Inner,
                _ => ObjectKind::Leaf,
            };
            let before = match cur {
                Some(o) if o.kind == want => o.doc,
                _ => return fail(PreconditionFailure::TargetMissing(path.clone())),
            };
            let write = match want {
                ObjectKind::Inner => StoreWrite::RemoveInner { path: path.clone() },
                ObjectKind::Leaf => StoreWrite::RemoveLeaf { path: path.clone() },
            };
            (want == ObjectKind::Leaf, Some(before), None, write)
        }
    };
    Ok(Checked {
        path: path.clone(),
        kind: w.kind,
        leaf,
        before,
        after,
        write,
    })
}
