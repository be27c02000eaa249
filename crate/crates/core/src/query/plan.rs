//! Query planning: one node per level, with child-id scan bounds derived
//! from `obj_id` comparisons that every match must satisfy.

use std::ops::Bound;
use std::sync::Arc;

use super::{id_literal, Expr, PathQuery, Predicate, OBJ_ID};
use crate::path::IdBounds;
use crate::value::CmpOp;

pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub level: usize,
    pub predicate: Arc<Predicate>,
    pub bounds: IdBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecPlan {
    pub nodes: Vec<PlanNode>,
    pub batch_size: usize,
}

impl ExecPlan {
    /// Same plan with every scan bound removed.
    pub fn without_bounds(mut self) -> Self {
        for n in &mut self.nodes {
            n.bounds = IdBounds::all();
        }
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }
}

pub fn plan_query(q: &PathQuery) -> ExecPlan {
    let nodes = q
        .levels
        .iter()
        .enumerate()
        .map(|(i, p)| PlanNode {
            level: i + 1,
            predicate: p.clone(),
            bounds: id_bounds(p),
        })
        .collect();
    ExecPlan {
        nodes,
        batch_size: DEFAULT_BATCH_SIZE,
    }
}

/// Intersects the ranges of top-level conjuncts of the form
/// `obj_id op literal`. Anything else contributes no restriction.
pub(crate) fn id_bounds(p: &Predicate) -> IdBounds {
    let Predicate::Expr(e) = p else {
        return IdBounds::all();
    };
    let mut cs = Vec::new();
    conjuncts(e, &mut cs);
    cs.into_iter()
        .filter_map(cmp_bounds)
        .fold(IdBounds::all(), IdBounds::intersect)
}

fn conjuncts<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::And(xs) => xs.iter().for_each(|x| conjuncts(x, out)),
        other => out.push(other),
    }
}

fn cmp_bounds(e: &Expr) -> Option<IdBounds> {
    let Expr::Cmp { field, op, lit } = e else {
        return None;
    };
    if field != OBJ_ID {
        return None;
    }
    let v = id_literal(lit)?;
    let (lower, upper) = match op {
        CmpOp::Lt => (Bound::Unbounded, Bound::Excluded(v)),
        CmpOp::Le => (Bound::Unbounded, Bound::Included(v)),
        CmpOp::Eq => (Bound::Included(v.clone()), Bound::Included(v)),
        CmpOp::Ge => (Bound::Included(v), Bound::Unbounded),
        CmpOp::Gt => (Bound::Excluded(v), Bound::Unbounded),
        CmpOp::Ne => return None,
    };
    Some(IdBounds { lower, upper })
}
