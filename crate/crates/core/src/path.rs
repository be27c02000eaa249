//! Object paths, version ids, and the order-preserving key encoding.
//!
//! Encoded keys are `depth (u16 BE) || c1 0x00 c2 0x00 ... ck`. Byte order
//! of encoded keys is depth-major, then lexicographic by components, so all
//! children of one parent form a single contiguous key range.

use std::fmt;
use std::ops::Bound;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PathError;

pub const SEP: u8 = 0x00;
pub const MAX_DEPTH: usize = u16::MAX as usize;

/// Global monotone version id. `Vid(0)` means "never".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vid(pub u64);

impl Vid {
    pub const NEVER: Vid = Vid(0);
    pub const MAX: Vid = Vid(u64::MAX);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> Vid {
        Vid(self.0 + 1)
    }

    pub fn prev(self) -> Vid {
        Vid(self.0.saturating_sub(1))
    }

    pub fn is_never(self) -> bool {
        self.0 == 0
    }

    /// Order-inverted big-endian bytes, so newer vids sort first.
    pub fn inverted_bytes(self) -> [u8; 8] {
        (u64::MAX - self.0).to_be_bytes()
    }

    pub fn from_inverted_bytes(b: [u8; 8]) -> Vid {
        Vid(u64::MAX - u64::from_be_bytes(b))
    }
}

impl fmt::Display for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Vid {
    fn from(v: u64) -> Self {
        Vid(v)
    }
}

/// Absolute object path. The root path has zero components and is never
/// stored; every stored object has depth ≥ 1.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(Arc<[String]>);

pub fn validate_id(id: &str) -> Result<(), PathError> {
    if id.is_empty() {
        return Err(PathError::EmptyComponent(id.to_string()));
    }
    if id.bytes().any(|b| b == SEP || b == b'/') {
        return Err(PathError::ReservedByte(id.to_string()));
    }
    Ok(())
}

impl Path {
    pub fn root() -> Self {
        Path(Arc::from(Vec::<String>::new()))
    }

    pub fn parse(s: &str) -> Result<Self, PathError> {
        if !s.starts_with('/') {
            return Err(PathError::NotAbsolute(s.to_string()));
        }
        if s == "/" {
            return Ok(Self::root());
        }
        let mut comps = Vec::new();
        for c in s[1..].split('/') {
            if c.is_empty() {
                return Err(PathError::EmptyComponent(s.to_string()));
            }
            if c.as_bytes().contains(&SEP) {
                return Err(PathError::ReservedByte(c.to_string()));
            }
            comps.push(c.to_string());
        }
        Self::from_components(comps)
    }

    pub fn from_components<I, S>(comps: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let comps: Vec<String> = comps.into_iter().map(Into::into).collect();
        for c in &comps {
            validate_id(c)?;
        }
        if comps.len() > MAX_DEPTH {
            return Err(PathError::TooDeep { max: MAX_DEPTH });
        }
        Ok(Path(Arc::from(comps)))
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn components(&self) -> &[String] {
        &self.0
    }

    /// Last component, or `None` for the root.
    pub fn id(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn parent(&self) -> Option<Path> {
        if self.is_root() {
            None
        } else {
            Some(Path(Arc::from(&self.0[..self.0.len() - 1])))
        }
    }

    pub fn child(&self, id: &str) -> Result<Path, PathError> {
        validate_id(id)?;
        if self.depth() >= MAX_DEPTH {
            return Err(PathError::TooDeep { max: MAX_DEPTH });
        }
        let mut v = self.0.to_vec();
        v.push(id.to_string());
        Ok(Path(Arc::from(v)))
    }

    /// True when `self` is a strict descendant of `other`.
    pub fn is_descendant_of(&self, other: &Path) -> bool {
        self.depth() > other.depth() && self.0[..other.depth()] == other.0[..]
    }

    /// Path obtained by replacing the prefix `from` with `to`.
    pub fn rebase(&self, from: &Path, to: &Path) -> Option<Path> {
        if self != from && !self.is_descendant_of(from) {
            return None;
        }
        let mut v = to.0.to_vec();
        v.extend(self.0[from.depth()..].iter().cloned());
        Some(Path(Arc::from(v)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.0.iter().map(|c| c.len() + 1).sum::<usize>());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.depth() as u16).to_be_bytes());
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            out.extend_from_slice(c.as_bytes());
        }
    }

    pub fn decode(key: &[u8]) -> Result<Path, PathError> {
        if key.len() < 2 {
            return Err(PathError::MalformedKey);
        }
        let depth = u16::from_be_bytes([key[0], key[1]]) as usize;
        let body = &key[2..];
        if depth == 0 {
            return if body.is_empty() {
                Ok(Path::root())
            } else {
                Err(PathError::MalformedKey)
            };
        }
        let comps = body
            .split(|b| *b == SEP)
            .map(|c| std::str::from_utf8(c).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| PathError::MalformedKey)?;
        if comps.len() != depth {
            return Err(PathError::MalformedKey);
        }
        Path::from_components(comps).map_err(|_| PathError::MalformedKey)
    }

    /// Common key prefix shared by every child of `self`.
    pub fn children_prefix(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&((self.depth() + 1) as u16).to_be_bytes());
        for c in self.0.iter() {
            out.extend_from_slice(c.as_bytes());
            out.push(SEP);
        }
        out
    }

    /// Key range covering the children of `self` whose ids fall within
    /// `bounds`. Works for any keyspace whose keys start with an encoded
    /// path followed by either nothing or `SEP` and a suffix.
    pub fn children_range(&self, bounds: &IdBounds) -> (Vec<u8>, Option<Vec<u8>>) {
        let prefix = self.children_prefix();
        let start = match &bounds.lower {
            Bound::Unbounded => prefix.clone(),
            Bound::Included(x) => concat(&prefix, x.as_bytes(), None),
            Bound::Excluded(x) => concat(&prefix, x.as_bytes(), Some(0x01)),
        };
        let end = match &bounds.upper {
            Bound::Unbounded => prefix_successor(&prefix),
            Bound::Included(y) => Some(concat(&prefix, y.as_bytes(), Some(0x01))),
            Bound::Excluded(y) => Some(concat(&prefix, y.as_bytes(), None)),
        };
        (start, end)
    }
}

fn concat(prefix: &[u8], id: &[u8], tail: Option<u8>) -> Vec<u8> {
    let mut v = Vec::with_capacity(prefix.len() + id.len() + 1);
    v.extend_from_slice(prefix);
    v.extend_from_slice(id);
    v.extend(tail);
    v
}

/// Smallest key greater than every key starting with `prefix`.
pub fn prefix_successor(prefix: &[u8]) -> Option<Vec<u8>> {
    let mut v = prefix.to_vec();
    while let Some(last) = v.pop() {
        if last < 0xff {
            v.push(last + 1);
            return Some(v);
        }
    }
    None
}

/// Range restriction on child object ids, compared as strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdBounds {
    pub lower: Bound<String>,
    pub upper: Bound<String>,
}

impl Default for IdBounds {
    fn default() -> Self {
        Self::all()
    }
}

impl IdBounds {
    pub fn all() -> Self {
        IdBounds {
            lower: Bound::Unbounded,
            upper: Bound::Unbounded,
        }
    }

    pub fn exact(id: &str) -> Self {
        IdBounds {
            lower: Bound::Included(id.to_string()),
            upper: Bound::Included(id.to_string()),
        }
    }

    /// The single id admitted, for ranges of the form `[id, id]`.
    pub fn exact_id(&self) -> Option<&str> {
        match (&self.lower, &self.upper) {
            (Bound::Included(a), Bound::Included(b)) if a == b => Some(a),
            _ => None,
        }
    }

    pub fn is_all(&self) -> bool {
        matches!((&self.lower, &self.upper), (Bound::Unbounded, Bound::Unbounded))
    }

    pub fn contains(&self, id: &str) -> bool {
        let lo = match &self.lower {
            Bound::Unbounded => true,
            Bound::Included(x) => id >= x.as_str(),
            Bound::Excluded(x) => id > x.as_str(),
        };
        let hi = match &self.upper {
            Bound::Unbounded => true,
            Bound::Included(y) => id <= y.as_str(),
            Bound::Excluded(y) => id < y.as_str(),
        };
        lo && hi
    }

    /// Tightens `self` with another constraint (intersection).
    pub fn intersect(self, other: IdBounds) -> IdBounds {
        IdBounds {
            lower: tighter(self.lower, other.lower, true),
            upper: tighter(self.upper, other.upper, false),
        }
    }

    /// Whether some id may satisfy both ranges. Conservative: may report an
    /// overlap for ranges whose intersection holds no valid id.
    pub fn overlaps(&self, other: &IdBounds) -> bool {
        !self.clone().intersect(other.clone()).is_empty()
    }

    pub fn is_empty(&self) -> bool {
        match (&self.lower, &self.upper) {
            (Bound::Unbounded, _) | (_, Bound::Unbounded) => false,
            (Bound::Included(a), Bound::Included(b)) => a > b,
            (Bound::Included(a), Bound::Excluded(b))
            | (Bound::Excluded(a), Bound::Included(b))
            | (Bound::Excluded(a), Bound::Excluded(b)) => a >= b,
        }
    }
}

fn tighter(a: Bound<String>, b: Bound<String>, lower: bool) -> Bound<String> {
    use Bound::*;
    match (a, b) {
        (Unbounded, x) | (x, Unbounded) => x,
        (a, b) => {
            let (av, bv) = (bound_val(&a), bound_val(&b));
            if av == bv {
                if matches!(a, Excluded(_)) {
                    a
                } else {
                    b
                }
            } else if (av > bv) == lower {
                a
            } else {
                b
            }
        }
    }
}

fn bound_val(b: &Bound<String>) -> &str {
    match b {
        Bound::Included(x) | Bound::Excluded(x) => x,
        Bound::Unbounded => "",
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("/");
        }
        for c in self.0.iter() {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Path({self})")
    }
}

impl FromStr for Path {
    type Err = PathError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Path::parse(s)
    }
}

impl Serialize for Path {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Path::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Path {
        Path::parse(s).unwrap()
    }

    /// Reference order: depth first, then components lexicographically.
    fn oracle_cmp(a: &Path, b: &Path) -> std::cmp::Ordering {
        (a.depth(), a.components()).cmp(&(b.depth(), b.components()))
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(p("/a/b/c").to_string(), "/a/b/c");
        assert_eq!(p("/").depth(), 0);
        assert!(matches!(Path::parse("a/b"), Err(PathError::NotAbsolute(_))));
        assert!(matches!(Path::parse("/a//b"), Err(PathError::EmptyComponent(_))));
        assert!(matches!(Path::parse("/a/"), Err(PathError::EmptyComponent(_))));
        assert!(matches!(Path::parse("/a\0b"), Err(PathError::ReservedByte(_))));
        assert!(p("/a").child("x/y").is_err());
    }

    #[test]
    fn parent_child_rebase() {
        let x = p("/a/b");
        assert_eq!(x.parent().unwrap(), p("/a"));
        assert_eq!(p("/a").parent().unwrap(), Path::root());
        assert_eq!(x.child("c").unwrap(), p("/a/b/c"));
        assert!(p("/a/b/c").is_descendant_of(&p("/a")));
        assert!(!p("/a").is_descendant_of(&p("/a")));
        assert!(!p("/ab").is_descendant_of(&p("/a")));
        assert_eq!(p("/a/b/c").rebase(&p("/a"), &p("/x/y")).unwrap(), p("/x/y/b/c"));
        assert_eq!(p("/q").rebase(&p("/a"), &p("/x")), None);
    }

    #[test]
    fn key_order_examples() {
        assert!(p("/retail").encode() < p("/retail/sales").encode());
        assert!(p("/a/b").encode() < p("/a/c").encode());
        assert!(p("/zoo").encode() < p("/a/b").encode());
    }

    #[test]
    fn key_order_matches_oracle_on_corpus() {
        let corpus = ["/zoo", "/a/b", "/a", "/a/b/c", "/ab", "/a/bc", "/b/a", "/a\u{1}"];
        let paths: Vec<Path> = corpus.iter().map(|s| p(s)).collect();
        for a in &paths {
            for b in &paths {
                assert_eq!(a.encode().cmp(&b.encode()), oracle_cmp(a, b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn decode_round_trip_and_malformed() {
        for s in ["/", "/a", "/a/b/c"] {
            assert_eq!(Path::decode(&p(s).encode()).unwrap(), p(s));
        }
        assert!(Path::decode(&[0]).is_err());
        assert!(Path::decode(&[0, 2, b'a']).is_err());
        assert!(Path::decode(&[0, 1, 0xff]).is_err());
    }

    #[test]
    fn children_prefix_covers_exactly_children() {
        let parent = p("/a");
        let pre = parent.children_prefix();
        assert!(p("/a/x").encode().starts_with(&pre));
        assert!(p("/a/x/y").encode()[2..].starts_with(&pre[2..]));
        assert!(!p("/a/x/y").encode().starts_with(&pre));
        assert!(!p("/ab/x").encode().starts_with(&pre));
        assert!(Path::root().children_prefix() == vec![0, 1]);
    }

    #[test]
    fn bounded_ranges() {
        let parent = p("/t");
        let ids = ["005", "1", "10", "100", "1000", "150", "2"];
        let b = IdBounds {
            lower: Bound::Excluded("1".into()),
            upper: Bound::Excluded("100".into()),
        };
        let (start, end) = parent.children_range(&b);
        let end = end.unwrap();
        let mut got = Vec::new();
        for id in ids {
            let k = parent.child(id).unwrap().encode();
            let mut with_suffix = k.clone();
            with_suffix.push(SEP);
            with_suffix.extend_from_slice(&Vid(3).inverted_bytes());
            let in_range = k >= start && k < end;
            assert_eq!(in_range, with_suffix >= start && with_suffix < end, "{id}");
            if in_range {
                got.push(id);
            }
            assert_eq!(in_range, b.contains(id), "{id}");
        }
        assert_eq!(got, vec!["10"]);
    }

    #[test]
    fn bounds_algebra() {
        let a = IdBounds {
            lower: Bound::Included("b".into()),
            upper: Bound::Excluded("m".into()),
        };
        let b = IdBounds {
            lower: Bound::Excluded("b".into()),
            upper: Bound::Included("z".into()),
        };
        let c = a.clone().intersect(b.clone());
        assert_eq!(c.lower, Bound::Excluded("b".into()));
        assert_eq!(c.upper, Bound::Excluded("m".into()));
        assert!(a.overlaps(&b));
        assert!(!IdBounds::exact("a").overlaps(&a));
        assert!(IdBounds::exact("c").overlaps(&a));
        let touching = IdBounds {
            lower: Bound::Excluded("m".into()),
            upper: Bound::Unbounded,
        };
        assert!(!touching.overlaps(&a));
    }

    #[test]
    fn inverted_vids_sort_newest_first() {
        assert!(Vid(9).inverted_bytes() < Vid(5).inverted_bytes());
        assert_eq!(Vid::from_inverted_bytes(Vid(77).inverted_bytes()), Vid(77));
    }

    fn arb_path() -> impl Strategy<Value = Path> {
        prop::collection::vec("[a-c\u{1}\u{7f}é]{1,3}", 1..4)
            .prop_map(|c| Path::from_components(c).unwrap())
    }

    fn arb_bound() -> impl Strategy<Value = Bound<String>> {
        prop_oneof![
            Just(Bound::Unbounded),
            "[a-c]{1,2}".prop_map(Bound::Included),
            "[a-c]{1,2}".prop_map(Bound::Excluded),
        ]
    }

    proptest! {
        #[test]
        fn key_order_property(a in arb_path(), b in arb_path()) {
            prop_assert_eq!(a.encode().cmp(&b.encode()), oracle_cmp(&a, &b));
            prop_assert_eq!(Path::decode(&a.encode()).unwrap(), a);
        }

        #[test]
        fn children_range_matches_filter(
            parent in arb_path(),
            ids in prop::collection::vec("[a-c]{1,3}", 0..8),
            lower in arb_bound(),
            upper in arb_bound(),
            other in arb_path(),
        ) {
            let b = IdBounds { lower, upper };
            let (start, end) = parent.children_range(&b);
            let in_range = |k: &[u8]| k >= &start[..] && end.as_ref().map_or(true, |e| k < &e[..]);
            for id in &ids {
                let k = parent.child(id).unwrap().encode();
                prop_assert_eq!(in_range(&k), b.contains(id));
            }
            if other.parent().as_ref() != Some(&parent) {
                prop_assert!(!in_range(&other.encode()));
            }
        }

        #[test]
        fn intersect_is_conjunction(
            l1 in arb_bound(), u1 in arb_bound(), l2 in arb_bound(), u2 in arb_bound(),
            id in "[a-c]{1,2}",
        ) {
            let a = IdBounds { lower: l1, upper: u1 };
            let b = IdBounds { lower: l2, upper: u2 };
            let both = a.contains(&id) && b.contains(&id);
            let c = a.clone().intersect(b.clone());
            prop_assert_eq!(c.contains(&id), both);
            if both {
                prop_assert!(a.overlaps(&b));
            }
        }
    }
}
