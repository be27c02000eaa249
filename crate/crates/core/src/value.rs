//! Document values stored at every catalog object.
//!
//! A [`Document`] is an ordered list of named fields. Field values are
//! scalars, nested documents, or arrays. Documents have a deterministic
//! binary encoding (used inside the store, so that images can be compared
//! bytewise) and a JSON text form (used on the wire and in the CLI).

use std::cmp::Ordering;
use std::fmt;

use serde_json::{Map as JsonMap, Number, Value as Json};

use crate::error::ValueError;

/// Leaf value of a document field.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Bytes(Vec<u8>),
}

impl Scalar {
    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Null => "null",
            Scalar::Bool(_) => "bool",
            Scalar::Int(_) => "int",
            Scalar::Float(_) => "float",
            Scalar::Str(_) => "string",
            Scalar::Bytes(_) => "bytes",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Ordering within compatible types. `None` for incomparable pairs
    /// (differing types other than int/float, or NaN).
    pub fn partial_cmp_scalar(&self, other: &Scalar) -> Option<Ordering> {
        use Scalar::*;
        match (self, other) {
            (Null, Null) => Some(Ordering::Equal),
            (Bool(a), Bool(b)) => Some(a.cmp(b)),
            (Int(a), Int(b)) => Some(a.cmp(b)),
            (Float(a), Float(b)) => a.partial_cmp(b),
            (Int(a), Float(b)) => cmp_int_float(*a, *b),
            (Float(a), Int(b)) => cmp_int_float(*b, *a).map(Ordering::reverse),
            (Str(a), Str(b)) => Some(a.as_str().cmp(b.as_str())),
            (Bytes(a), Bytes(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

fn cmp_int_float(i: i64, f: f64) -> Option<Ordering> {
    const TWO_POW_63: f64 = 9_223_372_036_854_775_808.0;
    if f.is_nan() {
        return None;
    }
    if f >= TWO_POW_63 {
        return Some(Ordering::Less);
    }
    if f < -TWO_POW_63 {
        return Some(Ordering::Greater);
    }
    // |trunc(f)| < 2^63, so the cast is exact.
    let whole = f.trunc();
    Some(i.cmp(&(whole as i64)).then_with(|| {
        let frac = f - whole;
        if frac > 0.0 {
            Ordering::Less
        } else if frac < 0.0 {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }))
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Null => f.write_str("null"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => {
                if x.fract() == 0.0 && x.is_finite() {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
            Scalar::Str(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    match c {
                        '\'' => f.write_str("\\'")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("'")
            }
            Scalar::Bytes(b) => {
                f.write_str("0x")?;
                for byte in b {
                    write!(f, "{byte:02x}")?;
                }
                Ok(())
            }
        }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_owned())
    }
}

impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Str(v)
    }
}

/// A field value: scalar, nested document, or array.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(Scalar),
    Doc(Document),
    Array(Vec<Value>),
}

impl From<Scalar> for Value {
    fn from(v: Scalar) -> Self {
        Value::Scalar(v)
    }
}

macro_rules! value_from_scalar {
    ($($t:ty),*) => {
        $(impl From<$t> for Value {
            fn from(v: $t) -> Self {
                Value::Scalar(v.into())
            }
        })*
    };
}

value_from_scalar!(i64, f64, bool, &str, String);

impl From<Document> for Value {
    fn from(d: Document) -> Self {
        Value::Doc(d)
    }
}

/// Ordered-field document. Field names are unique within one level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    fields: Vec<(String, Value)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a document from `(name, value)` pairs, rejecting duplicates.
    pub fn from_fields<I, K, V>(fields: I) -> Result<Self, ValueError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<Value>,
    {
        let mut doc = Document::new();
        for (k, v) in fields {
            let k = k.into();
            if doc.get(&k).is_some() {
                return Err(ValueError::DuplicateField(k));
            }
            doc.fields.push((k, v.into()));
        }
        Ok(doc)
    }

    /// Builder-style insert; replaces an existing field in place.
    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        let name = name.into();
        let value = value.into();
        match self.fields.iter_mut().find(|(k, _)| *k == name) {
            Some(slot) => slot.1 = value,
            None => self.fields.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.fields.iter_mut().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Resolves a dotted field path to a scalar.
    ///
    /// Missing components yield `Ok(None)`; a path ending on a nested
    /// document or array is an error.
    pub fn get_field(&self, field_path: &str) -> Result<Option<&Scalar>, ValueError> {
        if field_path.is_empty() || field_path.split('.').any(str::is_empty) {
            return Err(ValueError::InvalidFieldPath(field_path.to_owned()));
        }
        let mut parts = field_path.split('.').peekable();
        let mut cur = self;
        while let Some(part) = parts.next() {
            let Some(v) = cur.get(part) else {
                return Ok(None);
            };
            let last = parts.peek().is_none();
            match (v, last) {
                (Value::Scalar(s), true) => return Ok(Some(s)),
                (Value::Doc(d), false) => cur = d,
                (Value::Scalar(_) | Value::Array(_), false) => return Ok(None),
                (Value::Doc(_) | Value::Array(_), true) => {
                    return Err(ValueError::NotScalar(field_path.to_owned()))
                }
            }
        }
        Ok(None)
    }

    /// Mutable scalar slot at a dotted path, if it exists.
    pub(crate) fn scalar_slot_mut(&mut self, field_path: &str) -> Option<&mut Scalar> {
        let mut parts = field_path.split('.').peekable();
        let mut cur = self;
        while let Some(part) = parts.next() {
            let last = parts.peek().is_none();
            match (cur.get_mut(part)?, last) {
                (Value::Scalar(s), true) => return Some(s),
                (Value::Doc(d), false) => cur = d,
                _ => return None,
            }
        }
        None
    }

    // ---- binary codec -------------------------------------------------

    /// Deterministic binary encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        put_varint(out, self.fields.len() as u64);
        for (k, v) in &self.fields {
            put_varint(out, k.len() as u64);
            out.extend_from_slice(k.as_bytes());
            encode_value(v, out);
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ValueError> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let doc = decode_doc(&mut cur, 0)?;
        if cur.pos != bytes.len() {
            return Err(ValueError::Decode("trailing bytes".into()));
        }
        Ok(doc)
    }

    // ---- JSON ----------------------------------------------------------

    pub fn to_json(&self) -> Json {
        let mut map = JsonMap::new();
        for (k, v) in &self.fields {
            map.insert(k.clone(), value_to_json(v));
        }
        Json::Object(map)
    }

    pub fn from_json(json: &Json) -> Result<Self, ValueError> {
        match json {
            Json::Object(map) => {
                let mut doc = Document::new();
                for (k, v) in map {
                    doc.fields.push((k.clone(), value_from_json(v)?));
                }
                Ok(doc)
            }
            other => Err(ValueError::Json(format!("expected object, got {other}"))),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ValueError> {
        let json: Json = serde_json::from_str(text).map_err(|e| ValueError::Json(e.to_string()))?;
        Self::from_json(&json)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// Comparison operators usable in predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator with its operands swapped (`a < b` iff `b > a`).
    pub fn flipped(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Predicate-filter comparison. Mismatched types and absent operands
/// evaluate to `false` for every operator, including `!=`.
pub fn compare_scalars(a: Option<&Scalar>, b: Option<&Scalar>, op: CmpOp) -> bool {
    let (Some(a), Some(b)) = (a, b) else {
        return false;
    };
    let Some(ord) = a.partial_cmp_scalar(b) else {
        return false;
    };
    match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ne => ord != Ordering::Equal,
    }
}

// ---- codec internals ---------------------------------------------------

const TAG_NULL: u8 = 0;
const TAG_FALSE: u8 = 1;
const TAG_TRUE: u8 = 2;
const TAG_INT: u8 = 3;
const TAG_FLOAT: u8 = 4;
const TAG_STR: u8 = 5;
const TAG_BYTES: u8 = 6;
const TAG_DOC: u8 = 7;
const TAG_ARRAY: u8 = 8;

const MAX_NESTING: usize = 128;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn encode_value(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Scalar(s) => match s {
            Scalar::Null => out.push(TAG_NULL),
            Scalar::Bool(false) => out.push(TAG_FALSE),
            Scalar::Bool(true) => out.push(TAG_TRUE),
            Scalar::Int(i) => {
                out.push(TAG_INT);
                out.extend_from_slice(&i.to_be_bytes());
            }
            Scalar::Float(x) => {
                out.push(TAG_FLOAT);
                out.extend_from_slice(&x.to_bits().to_be_bytes());
            }
            Scalar::Str(s) => {
                out.push(TAG_STR);
                put_varint(out, s.len() as u64);
                out.extend_from_slice(s.as_bytes());
            }
            Scalar::Bytes(b) => {
                out.push(TAG_BYTES);
                put_varint(out, b.len() as u64);
                out.extend_from_slice(b);
            }
        },
        Value::Doc(d) => {
            out.push(TAG_DOC);
            d.encode_into(out);
        }
        Value::Array(items) => {
            out.push(TAG_ARRAY);
            put_varint(out, items.len() as u64);
            for item in items {
                encode_value(item, out);
            }
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8, ValueError> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| ValueError::Decode("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ValueError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ValueError::Decode("length exceeds input".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, ValueError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(ValueError::Decode("varint overflow".into()))
    }

    fn len(&mut self) -> Result<usize, ValueError> {
        let n = self.varint()?;
        usize::try_from(n).map_err(|_| ValueError::Decode("length overflow".into()))
    }

    fn string(&mut self) -> Result<String, ValueError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ValueError::Decode("invalid utf-8".into()))
    }
}

fn decode_doc(cur: &mut Cursor<'_>, depth: usize) -> Result<Document, ValueError> {
    if depth > MAX_NESTING {
        return Err(ValueError::Decode("nesting too deep".into()));
    }
    let n = cur.len()?;
    let mut doc = Document {
        fields: Vec::with_capacity(n.min(1024)),
    };
    for _ in 0..n {
        let k = cur.string()?;
        let v = decode_value(cur, depth)?;
        if doc.get(&k).is_some() {
            return Err(ValueError::DuplicateField(k));
        }
        doc.fields.push((k, v));
    }
    Ok(doc)
}

fn decode_value(cur: &mut Cursor<'_>, depth: usize) -> Result<Value, ValueError> {
    let tag = cur.byte()?;
    Ok(match tag {
        TAG_NULL => Value::Scalar(Scalar::Null),
        TAG_FALSE => Value::Scalar(Scalar::Bool(false)),
        TAG_TRUE => Value::Scalar(Scalar::Bool(true)),
        TAG_INT => {
            let b: [u8; 8] = cur.take(8)?.try_into().expect("8 bytes");
            Value::Scalar(Scalar::Int(i64::from_be_bytes(b)))
        }
        TAG_FLOAT => {
            let b: [u8; 8] = cur.take(8)?.try_into().expect("8 bytes");
            Value::Scalar(Scalar::Float(f64::from_bits(u64::from_be_bytes(b))))
        }
        TAG_STR => Value::Scalar(Scalar::Str(cur.string()?)),
        TAG_BYTES => {
            let n = cur.len()?;
            Value::Scalar(Scalar::Bytes(cur.take(n)?.to_vec()))
        }
        TAG_DOC => Value::Doc(decode_doc(cur, depth + 1)?),
        TAG_ARRAY => {
            if depth > MAX_NESTING {
                return Err(ValueError::Decode("nesting too deep".into()));
            }
            let n = cur.len()?;
            let mut items = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                items.push(decode_value(cur, depth + 1)?);
            }
            Value::Array(items)
        }
        t => return Err(ValueError::Decode(format!("unknown tag {t}"))),
    })
}

// ---- JSON internals ----------------------------------------------------

const BYTES_KEY: &str = "$bytes";

fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Scalar(s) => scalar_to_json(s),
        Value::Doc(d) => d.to_json(),
        Value::Array(items) => Json::Array(items.iter().map(value_to_json).collect()),
    }
}

pub(crate) fn scalar_to_json(s: &Scalar) -> Json {
    match s {
        Scalar::Null => Json::Null,
        Scalar::Bool(b) => Json::Bool(*b),
        Scalar::Int(i) => Json::Number((*i).into()),
        // Non-finite floats have no JSON form.
        Scalar::Float(x) => Number::from_f64(*x).map(Json::Number).unwrap_or(Json::Null),
        Scalar::Str(s) => Json::String(s.clone()),
        Scalar::Bytes(b) => {
            let hex: String = b.iter().map(|x| format!("{x:02x}")).collect();
            let mut m = JsonMap::new();
            m.insert(BYTES_KEY.into(), Json::String(hex));
            Json::Object(m)
        }
    }
}

fn value_from_json(j: &Json) -> Result<Value, ValueError> {
    Ok(match j {
        Json::Object(map) if map.len() == 1 && map.contains_key(BYTES_KEY) => {
            let hex = map[BYTES_KEY]
                .as_str()
                .ok_or_else(|| ValueError::Json("$bytes must be a hex string".into()))?;
            Value::Scalar(Scalar::Bytes(parse_hex(hex)?))
        }
        Json::Object(_) => Value::Doc(Document::from_json(j)?),
        Json::Array(items) => Value::Array(items.iter().map(value_from_json).collect::<Result<_, _>>()?),
        other => Value::Scalar(scalar_from_json(other)?),
    })
}

pub(crate) fn scalar_from_json(j: &Json) -> Result<Scalar, ValueError> {
    Ok(match j {
        Json::Null => Scalar::Null,
        Json::Bool(b) => Scalar::Bool(*b),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Scalar::Int(i)
            } else if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                Scalar::Float(x)
            } else {
                return Err(ValueError::Json(format!("number out of range: {n}")));
            }
        }
        Json::String(s) => Scalar::Str(s.clone()),
        Json::Object(map) if map.len() == 1 && map.contains_key(BYTES_KEY) => {
            match value_from_json(j)? {
                Value::Scalar(s) => s,
                _ => unreachable!(),
            }
        }
        other => return Err(ValueError::Json(format!("expected scalar, got {other}"))),
    })
}

fn parse_hex(hex: &str) -> Result<Vec<u8>, ValueError> {
    if hex.len() % 2 != 0 {
        return Err(ValueError::Json("odd-length hex".into()));
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| ValueError::Json("invalid hex".into()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_doc() -> Document {
        let price = Document::new().with("min", 7i64);
        Document::new().with("stats", Document::new().with("price", price))
    }

    #[test]
    fn get_field_nested() {
        let d = stats_doc();
        assert_eq!(d.get_field("stats.price.min").unwrap(), Some(&Scalar::Int(7)));
    }

    #[test]
    fn get_field_missing_is_absent() {
        let d = Document::new().with("a", 1i64);
        assert_eq!(d.get_field("b.c").unwrap(), None);
        // descending through a scalar is also absence
        assert_eq!(d.get_field("a.b").unwrap(), None);
    }

    #[test]
    fn get_field_non_scalar_errors() {
        let d = stats_doc();
        assert!(matches!(d.get_field("stats.price"), Err(ValueError::NotScalar(_))));
        assert!(d.get_field("").is_err());
        assert!(d.get_field("a..b").is_err());
    }

    #[test]
    fn compare_examples() {
        let i = |v: i64| Scalar::Int(v);
        assert!(compare_scalars(Some(&i(3)), Some(&i(5)), CmpOp::Lt));
        let a = Scalar::from("2025-01-02");
        let b = Scalar::from("2025-01-01");
        assert!(compare_scalars(Some(&a), Some(&b), CmpOp::Gt));
        assert!(!compare_scalars(None, Some(&i(5)), CmpOp::Gt));
        assert!(!compare_scalars(None, Some(&i(5)), CmpOp::Ne));
    }

    #[test]
    fn compare_mixed_numeric_and_mismatch() {
        assert!(compare_scalars(Some(&Scalar::Int(3)), Some(&Scalar::Float(3.5)), CmpOp::Lt));
        assert!(compare_scalars(Some(&Scalar::Float(2.0)), Some(&Scalar::Int(2)), CmpOp::Eq));
        assert!(!compare_scalars(Some(&Scalar::Int(1)), Some(&Scalar::from("1")), CmpOp::Eq));
        assert!(!compare_scalars(Some(&Scalar::Int(1)), Some(&Scalar::from("1")), CmpOp::Ne));
        assert!(!compare_scalars(
            Some(&Scalar::Float(f64::NAN)),
            Some(&Scalar::Float(1.0)),
            CmpOp::Ne
        ));
        // near the i64 boundary the comparison stays exact
        assert!(compare_scalars(
            Some(&Scalar::Int(i64::MAX)),
            Some(&Scalar::Float(9.223_372_036_854_776e18)),
            CmpOp::Lt
        ));
    }

    #[test]
    fn codec_is_deterministic_and_round_trips() {
        let d = stats_doc()
            .with("name", "sales")
            .with("blob", Scalar::Bytes(vec![0, 1, 255]))
            .with("tags", Value::Array(vec![1i64.into(), "x".into()]))
            .with("ratio", 0.25f64)
            .with("none", Scalar::Null);
        let a = d.encode();
        assert_eq!(a, d.clone().encode());
        assert_eq!(Document::decode(&a).unwrap(), d);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(Document::decode(&[1, 1, b'a', 99]).is_err());
        assert!(Document::decode(&[5]).is_err());
        let mut bytes = Document::new().with("a", 1i64).encode();
        bytes.push(0);
        assert!(Document::decode(&bytes).is_err());
    }

    #[test]
    fn json_round_trip_preserves_order_and_types() {
        let text = r#"{"z":1,"a":2.5,"s":"x","b":{"$bytes":"00ff"},"n":null,"arr":[true,{"k":1}]}"#;
        let d = Document::from_json_str(text).unwrap();
        let names: Vec<_> = d.fields().map(|(k, _)| k).collect();
        assert_eq!(names, ["z", "a", "s", "b", "n", "arr"]);
        assert_eq!(d.get("a"), Some(&Value::Scalar(Scalar::Float(2.5))));
        assert_eq!(d.get("b"), Some(&Value::Scalar(Scalar::Bytes(vec![0, 255]))));
        assert_eq!(Document::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn duplicate_fields_rejected() {
        assert!(Document::from_fields([("a", 1i64), ("a", 2i64)]).is_err());
    }
}
