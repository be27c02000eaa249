//! Commit-time update deltas.
//!
//! A [`Delta`] is a list of commutative numeric operations on dotted field
//! paths. It is applied to the committed value of an object when the
//! merging transaction is written, so concurrent merges on the same object
//! never conflict with each other.

use std::fmt;

use serde_json::{Map as JsonMap, Value as Json};

use crate::error::ValueError;
use crate::value::{scalar_from_json, scalar_to_json, Document, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeltaKind {
    Add,
    Subtract,
    Min,
    Max,
}

impl DeltaKind {
    pub fn symbol(self) -> &'static str {
        match self {
            DeltaKind::Add => "+",
            DeltaKind::Subtract => "-",
            DeltaKind::Min => "min",
            DeltaKind::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "+" | "add" => DeltaKind::Add,
            "-" | "sub" | "subtract" => DeltaKind::Subtract,
            "min" => DeltaKind::Min,
            "max" => DeltaKind::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaOp {
    pub field: String,
    pub kind: DeltaKind,
    pub operand: Scalar,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Delta {
    ops: Vec<DeltaOp>,
}

impl Delta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(mut self, field: impl Into<String>, kind: DeltaKind, operand: impl Into<Scalar>) -> Self {
        self.ops.push(DeltaOp {
            field: field.into(),
            kind,
            operand: operand.into(),
        });
        self
    }

    pub fn ops(&self) -> &[DeltaOp] {
        &self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Parses the JSON delta form. Accepts flat dotted keys
    /// (`{"stats.size": {"op": "+", "val": 1}}`) and nested objects whose
    /// leaves are `{op, val}` pairs (`{"stats": {"size": {"op": "+", "val": 1}}}`).
    pub fn from_json(json: &Json) -> Result<Self, ValueError> {
        let Json::Object(map) = json else {
            return Err(ValueError::InvalidDelta("delta must be an object".into()));
        };
        let mut delta = Delta::new();
        collect_ops(map, "", &mut delta)?;
        Ok(delta)
    }

    pub fn to_json(&self) -> Json {
        let mut map = JsonMap::new();
        for op in &self.ops {
            let mut leaf = JsonMap::new();
            leaf.insert("op".into(), Json::String(op.kind.symbol().into()));
            leaf.insert("val".into(), scalar_to_json(&op.operand));
            map.insert(op.field.clone(), Json::Object(leaf));
        }
        Json::Object(map)
    }
}

fn collect_ops(map: &JsonMap<String, Json>, prefix: &str, delta: &mut Delta) -> Result<(), ValueError> {
    for (k, v) in map {
        let field = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let Json::Object(inner) = v else {
            return Err(ValueError::InvalidDelta(format!("{field}: expected {{op, val}}")));
        };
        if inner.len() == 2 && inner.contains_key("op") && inner.contains_key("val") {
            let kind = inner["op"]
                .as_str()
                .and_then(DeltaKind::parse)
                .ok_or_else(|| ValueError::InvalidDelta(format!("{field}: unknown op {}", inner["op"])))?;
            let operand = scalar_from_json(&inner["val"])?;
            delta.ops.push(DeltaOp { field, kind, operand });
        } else {
            collect_ops(inner, &field, delta)?;
        }
    }
    Ok(())
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// Applies `delta` to `base`, returning the new document. Untouched fields
/// keep their position and bytes.
pub fn apply_delta(base: &Document, delta: &Delta) -> Result<Document, ValueError> {
    let mut out = base.clone();
    for op in &delta.ops {
        let slot = out
            .scalar_slot_mut(&op.field)
            .ok_or_else(|| ValueError::DeltaTargetMissing(op.field.clone()))?;
        *slot = apply_op(slot, op)?;
    }
    Ok(out)
}

fn apply_op(cur: &Scalar, op: &DeltaOp) -> Result<Scalar, ValueError> {
    let mismatch = |expected: &'static str, found: &Scalar| ValueError::DeltaTypeMismatch {
        field: op.field.clone(),
        expected,
        found: found.type_name(),
    };
    match (cur, &op.operand) {
        (Scalar::Int(a), Scalar::Int(b)) => {
            let (a, b) = (*a, *b);
            let v = match op.kind {
                DeltaKind::Add => a.checked_add(b),
                DeltaKind::Subtract => a.checked_sub(b),
                DeltaKind::Min => Some(a.min(b)),
                DeltaKind::Max => Some(a.max(b)),
            };
            v.map(Scalar::Int)
                .ok_or_else(|| ValueError::DeltaOverflow(op.field.clone()))
        }
        (Scalar::Float(a), Scalar::Float(b)) => {
            let (a, b) = (*a, *b);
            Ok(Scalar::Float(match op.kind {
                DeltaKind::Add => a + b,
                DeltaKind::Subtract => a - b,
                DeltaKind::Min => a.min(b),
                DeltaKind::Max => a.max(b),
            }))
        }
        (Scalar::Int(_), other) => Err(mismatch("int", other)),
        (Scalar::Float(_), other) => Err(mismatch("float", other)),
        (other, _) => Err(ValueError::DeltaTypeMismatch {
            field: op.field.clone(),
            expected: "numeric field",
            found: other.type_name(),
        }),
    }
}
