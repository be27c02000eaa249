//! Path-navigation queries.
//!
//! A query is a sequence of levels, one predicate per tree depth:
//! `/[obj_id='retail']/[obj_id='sales' and obj_type='table']/*`. Level `i`
//! filters the children of every object that matched level `i-1`.

mod cost;
mod exec;
mod parser;
mod plan;

use std::fmt;
use std::sync::Arc;

pub use cost::{estimate_cost, CostEstimate};
pub use exec::{ExecStats, Executor, NoHook, ScanEntry, ScanHook, ScanRecorder};
pub use parser::{parse_predicate, parse_query};
pub use plan::{plan_query, ExecPlan, PlanNode, DEFAULT_BATCH_SIZE};

use crate::value::{compare_scalars, CmpOp, Document, Scalar};

/// Reserved field resolving to an object's own id (last path component).
pub const OBJ_ID: &str = "obj_id";

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// `field op literal`; comparisons written literal-first are flipped.
    Cmp {
        field: String,
        op: CmpOp,
        lit: Scalar,
    },
    EndsWith {
        field: String,
        suffix: String,
    },
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
    Const(bool),
}

/// One query level: the wildcard or a bracketed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Wildcard,
    Expr(Expr),
}

impl Predicate {
    /// Evaluates against an object with id `id` and document `doc`.
    pub fn matches(&self, id: &str, doc: &Document) -> bool {
        match self {
            Predicate::Wildcard => true,
            Predicate::Expr(e) => e.eval(id, doc),
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Predicate::Wildcard)
    }
}

/// String form of a literal when compared against an object id.
pub(crate) fn id_literal(lit: &Scalar) -> Option<String> {
    match lit {
        Scalar::Str(s) => Some(s.clone()),
        Scalar::Int(_) | Scalar::Float(_) => Some(lit.to_string()),
        _ => None,
    }
}

fn field_value<'a>(field: &str, id: &'a str, doc: &'a Document) -> Option<std::borrow::Cow<'a, Scalar>> {
    if field == OBJ_ID {
        return Some(std::borrow::Cow::Owned(Scalar::Str(id.to_string())));
    }
    doc.get_field(field).ok().flatten().map(std::borrow::Cow::Borrowed)
}

impl Expr {
    pub fn eval(&self, id: &str, doc: &Document) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Cmp { field, op, lit } => {
                let v = field_value(field, id, doc);
                if field == OBJ_ID {
                    let lit = id_literal(lit).map(Scalar::Str);
                    compare_scalars(v.as_deref(), lit.as_ref(), *op)
                } else {
                    compare_scalars(v.as_deref(), Some(lit), *op)
                }
            }
            Expr::EndsWith { field, suffix } => match field_value(field, id, doc).as_deref() {
                Some(Scalar::Str(s)) => s.ends_with(suffix.as_str()),
                _ => false,
            },
            Expr::And(xs) => xs.iter().all(|x| x.eval(id, doc)),
            Expr::Or(xs) => xs.iter().any(|x| x.eval(id, doc)),
            Expr::Not(x) => !x.eval(id, doc),
        }
    }

    fn is_compound(&self) -> bool {
        matches!(self, Expr::And(_) | Expr::Or(_))
    }
}

/// Parsed query: one predicate per level.
#[derive(Debug, Clone, PartialEq)]
pub struct PathQuery {
    pub levels: Vec<Arc<Predicate>>,
}

impl PathQuery {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

fn write_field(f: &mut fmt::Formatter<'_>, field: &str) -> fmt::Result {
    f.write_str(field)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Cmp { field, op, lit } => {
                write_field(f, field)?;
                write!(f, " {op} {lit}")
            }
            Expr::EndsWith { field, suffix } => {
                f.write_str("endswith(")?;
                write_field(f, field)?;
                write!(f, ", {})", Scalar::Str(suffix.clone()))
            }
            Expr::And(xs) | Expr::Or(xs) => {
                let sep = if matches!(self, Expr::And(_)) { " and " } else { " or " };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    if x.is_compound() {
                        write!(f, "({x})")?;
                    } else {
                        write!(f, "{x}")?;
                    }
                }
                Ok(())
            }
            Expr::Not(x) => {
                if x.is_compound() {
                    write!(f, "not ({x})")
                } else {
                    write!(f, "not {x}")
                }
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Wildcard => f.write_str("*"),
            Predicate::Expr(e) => write!(f, "[{e}]"),
        }
    }
}

impl fmt::Display for PathQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.levels {
            write!(f, "/{l}")?;
        }
        Ok(())
    }
}
