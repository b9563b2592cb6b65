//! Bounded join-semilattice types.
//!
//! Two bounded lattices model a finite session of items: [`BoundedPrefix`]
//! keeps the longest known prefix of the session, [`SealedSetIndexed`] keeps
//! position-indexed items plus an optional seal (the total count). Both have
//! a detectable top: once a point is top it absorbs every further merge, so
//! a consumer can act on it without coordination. [`KeyedLattice`] lifts
//! either lattice pointwise over a map of group keys.
//!
//! Merges are associative, commutative, and idempotent, which is what makes
//! the points safe to ship over channels that batch, reorder, or duplicate.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// An opaque, byte-comparable item payload. Items are canonical encodings of
/// domain values; the lattice layer never looks inside them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item(Vec<u8>);

impl Item {
    pub fn new(bytes: Vec<u8>) -> Self {
        Item(bytes)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for Item {
    fn from(s: &str) -> Self {
        Item(s.as_bytes().to_vec())
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", String::from_utf8_lossy(&self.0))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LatticeError {
    /// The two points cannot be points of one lattice: their prefixes
    /// diverge or their declared lengths disagree. Merging them means
    /// sessions got mixed somewhere upstream.
    #[error("incomparable lattice points: {0}")]
    IncomparableLattices(String),
    /// Two distinct values claim the same position. Positions are unique by
    /// construction, so this is corrupted input rather than divergence.
    #[error("conflicting entry at position {pos}: {left} vs {right}")]
    ConflictingEntry { pos: usize, left: String, right: String },
    /// Two different seal lengths for one session.
    #[error("conflicting seals: {0} vs {1}")]
    ConflictingSeal(usize, usize),
    /// An entry position at or beyond the seal.
    #[error("position {pos} not below seal {seal}")]
    PositionBeyondSeal { pos: usize, seal: usize },
    /// Pointwise merge found different lattice kinds under one key.
    #[error("lattice kind mismatch at key {key}")]
    KindMismatch { key: String },
    /// Pointwise merge failed under a key.
    #[error("merge failed at key {key}: {source}")]
    AtKey {
        key: String,
        #[source]
        source: Box<LatticeError>,
    },
}

/// A prefix of one fixed finite session, with the session's total length
/// once any point carrying it has been seen.
///
/// Bottom is the empty prefix with unknown length. Top is the full session:
/// length known and equal to the prefix length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BoundedPrefix {
    prefix: Vec<Item>,
    declared_len: Option<usize>,
}

impl BoundedPrefix {
    pub fn new(prefix: Vec<Item>, declared_len: Option<usize>) -> Result<Self, LatticeError> {
        if let Some(len) = declared_len {
            if prefix.len() > len {
                return Err(LatticeError::IncomparableLattices(format!(
                    "prefix of length {} exceeds declared length {}",
                    prefix.len(),
                    len
                )));
            }
        }
        Ok(BoundedPrefix { prefix, declared_len })
    }

    pub fn bottom() -> Self {
        BoundedPrefix::default()
    }

    pub fn prefix(&self) -> &[Item] {
        &self.prefix
    }

    pub fn declared_len(&self) -> Option<usize> {
        self.declared_len
    }

    /// True iff the declared length is known and the prefix fills it.
    pub fn is_top(&self) -> bool {
        self.declared_len == Some(self.prefix.len())
    }

    pub fn is_bottom(&self) -> bool {
        self.prefix.is_empty() && self.declared_len.is_none()
    }

    /// Least upper bound: the longer prefix, with length knowledge unioned.
    ///
    /// Errors when the shorter point is not a prefix of the longer one, or
    /// the declared lengths disagree: such points belong to different
    /// sessions and are incomparable.
    pub fn merge(&self, other: &BoundedPrefix) -> Result<BoundedPrefix, LatticeError> {
        let declared_len = match (self.declared_len, other.declared_len) {
            (Some(a), Some(b)) if a != b => {
                return Err(LatticeError::IncomparableLattices(format!(
                    "declared lengths disagree: {a} vs {b}"
                )))
            }
            (a, b) => a.or(b),
        };
        let (short, long) = if self.prefix.len() <= other.prefix.len() {
            (&self.prefix, &other.prefix)
        } else {
            (&other.prefix, &self.prefix)
        };
        if long[..short.len()] != short[..] {
            return Err(LatticeError::IncomparableLattices(
                "prefixes diverge".to_string(),
            ));
        }
        BoundedPrefix::new(long.clone(), declared_len)
    }

    /// Prefix containment (and compatible length knowledge).
    pub fn leq(&self, other: &BoundedPrefix) -> bool {
        self.prefix.len() <= other.prefix.len()
            && other.prefix[..self.prefix.len()] == self.prefix[..]
            && match (self.declared_len, other.declared_len) {
                (Some(a), Some(b)) => a == b,
                (Some(_), None) => false,
                (None, _) => true,
            }
    }

    /// Reindexes the prefix by position; the declared length becomes the seal.
    pub fn to_ssiv(&self) -> SealedSetIndexed {
        SealedSetIndexed {
            entries: self
                .prefix
                .iter()
                .cloned()
                .enumerate()
                .collect(),
            seal: self.declared_len,
        }
    }
}

impl fmt::Display for BoundedPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bp(")?;
        for (i, item) in self.prefix.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{item}")?;
        }
        match self.declared_len {
            Some(n) => write!(f, "|len={n})"),
            None => write!(f, "|len=?)"),
        }
    }
}

/// A set of position-indexed items with an optional seal (the total count).
///
/// Entries accumulate by union in any order and with any duplication; the
/// point is top exactly when the seal is known and every position below it
/// is present.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SealedSetIndexed {
    entries: BTreeMap<usize, Item>,
    seal: Option<usize>,
}

impl SealedSetIndexed {
    pub fn new(
        entries: impl IntoIterator<Item = (usize, Item)>,
        seal: Option<usize>,
    ) -> Result<Self, LatticeError> {
        let mut map = BTreeMap::new();
        for (pos, item) in entries {
            if let Some(prev) = map.insert(pos, item) {
                if map[&pos] != prev {
                    return Err(LatticeError::ConflictingEntry {
                        pos,
                        left: prev.to_string(),
                        right: map[&pos].to_string(),
                    });
                }
            }
        }
        let point = SealedSetIndexed { entries: map, seal };
        point.check_seal()?;
        Ok(point)
    }

    pub fn bottom() -> Self {
        SealedSetIndexed::default()
    }

    /// A single indexed item, optionally carrying the seal.
    pub fn singleton(pos: usize, item: Item, seal: Option<usize>) -> Result<Self, LatticeError> {
        SealedSetIndexed::new([(pos, item)], seal)
    }

    /// A bare seal with no entries (an empty sealed session).
    pub fn sealed_empty(seal: usize) -> Self {
        SealedSetIndexed { entries: BTreeMap::new(), seal: Some(seal) }
    }

    fn check_seal(&self) -> Result<(), LatticeError> {
        if let Some(seal) = self.seal {
            if let Some((&pos, _)) = self.entries.iter().next_back() {
                if pos >= seal {
                    return Err(LatticeError::PositionBeyondSeal { pos, seal });
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<usize, Item> {
        &self.entries
    }

    pub fn seal(&self) -> Option<usize> {
        self.seal
    }

    /// True iff the seal is known and that many distinct positions are
    /// present (necessarily 0..seal-1).
    pub fn is_top(&self) -> bool {
        self.seal == Some(self.entries.len())
    }

    pub fn is_bottom(&self) -> bool {
        self.entries.is_empty() && self.seal.is_none()
    }

    /// Least upper bound: entry union plus seal union.
    pub fn merge(&self, other: &SealedSetIndexed) -> Result<SealedSetIndexed, LatticeError> {
        let seal = match (self.seal, other.seal) {
            (Some(a), Some(b)) if a != b => return Err(LatticeError::ConflictingSeal(a, b)),
            (a, b) => a.or(b),
        };
        let mut entries = self.entries.clone();
        for (&pos, item) in &other.entries {
            match entries.get(&pos) {
                Some(existing) if existing != item => {
                    return Err(LatticeError::ConflictingEntry {
                        pos,
                        left: existing.to_string(),
                        right: item.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    entries.insert(pos, item.clone());
                }
            }
        }
        let merged = SealedSetIndexed { entries, seal };
        merged.check_seal()?;
        Ok(merged)
    }

    /// Entry containment plus seal containment.
    pub fn leq(&self, other: &SealedSetIndexed) -> bool {
        self.entries
            .iter()
            .all(|(pos, item)| other.entries.get(pos) == Some(item))
            && match (self.seal, other.seal) {
                (Some(a), Some(b)) => a == b,
                (Some(_), None) => false,
                (None, _) => true,
            }
    }

    /// The longest contiguous prefix from position 0, with the seal carried
    /// over as the declared length. Gap-free points convert exactly; gappy
    /// points project to the best known prefix.
    pub fn to_bounded_prefix(&self) -> BoundedPrefix {
        let mut prefix = Vec::new();
        for (i, (&pos, item)) in self.entries.iter().enumerate() {
            if pos != i {
                break;
            }
            prefix.push(item.clone());
        }
        BoundedPrefix { prefix, declared_len: self.seal }
    }

    /// The exact conversion, available only when the entries are gap-free.
    pub fn to_bounded_prefix_exact(&self) -> Option<BoundedPrefix> {
        let contiguous = self
            .entries
            .keys()
            .enumerate()
            .all(|(i, &pos)| i == pos);
        contiguous.then(|| self.to_bounded_prefix())
    }
}

impl fmt::Display for SealedSetIndexed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ssiv{{")?;
        for (i, (pos, item)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{pos}:{item}")?;
        }
        match self.seal {
            Some(n) => write!(f, "|seal={n}}}"),
            None => write!(f, "|seal=?}}"),
        }
    }
}

/// A point of either session lattice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LatticePoint {
    Bp(BoundedPrefix),
    Ssiv(SealedSetIndexed),
}

impl LatticePoint {
    pub fn merge(&self, other: &LatticePoint) -> Result<LatticePoint, LatticeError> {
        match (self, other) {
            (LatticePoint::Bp(a), LatticePoint::Bp(b)) => a.merge(b).map(LatticePoint::Bp),
            (LatticePoint::Ssiv(a), LatticePoint::Ssiv(b)) => a.merge(b).map(LatticePoint::Ssiv),
            _ => Err(LatticeError::IncomparableLattices(
                "cannot merge a bounded prefix with a sealed set".to_string(),
            )),
        }
    }

    pub fn is_top(&self) -> bool {
        match self {
            LatticePoint::Bp(p) => p.is_top(),
            LatticePoint::Ssiv(p) => p.is_top(),
        }
    }

    pub fn is_bottom(&self) -> bool {
        match self {
            LatticePoint::Bp(p) => p.is_bottom(),
            LatticePoint::Ssiv(p) => p.is_bottom(),
        }
    }

    pub fn leq(&self, other: &LatticePoint) -> bool {
        match (self, other) {
            (LatticePoint::Bp(a), LatticePoint::Bp(b)) => a.leq(b),
            (LatticePoint::Ssiv(a), LatticePoint::Ssiv(b)) => a.leq(b),
            _ => false,
        }
    }

    /// The items of the point in position order: the sealed sequence view
    /// used when comparing outputs across representations.
    pub fn items_in_order(&self) -> Vec<Item> {
        match self {
            LatticePoint::Bp(p) => p.prefix().to_vec(),
            LatticePoint::Ssiv(p) => p.entries().values().cloned().collect(),
        }
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticePoint::Bp(p) => write!(f, "{p}"),
            LatticePoint::Ssiv(p) => write!(f, "{p}"),
        }
    }
}

/// A finite map from group key to an inner lattice point, merged pointwise.
/// Absent keys behave as the inner bottom, so the keyed map is itself a
/// lattice.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyedLattice {
    groups: BTreeMap<Item, LatticePoint>,
}

impl KeyedLattice {
    pub fn new() -> Self {
        KeyedLattice::default()
    }

    pub fn groups(&self) -> &BTreeMap<Item, LatticePoint> {
        &self.groups
    }

    pub fn get(&self, key: &Item) -> Option<&LatticePoint> {
        self.groups.get(key)
    }

    /// Merges one point into one group. Returns the merged point and whether
    /// the group strictly grew.
    pub fn merge_at(
        &mut self,
        key: Item,
        point: &LatticePoint,
    ) -> Result<(LatticePoint, bool), LatticeError> {
        match self.groups.get(&key) {
            None => {
                self.groups.insert(key, point.clone());
                Ok((point.clone(), true))
            }
            Some(existing) => {
                let merged = existing.merge(point).map_err(|e| match e {
                    e @ LatticeError::KindMismatch { .. } => e,
                    e => LatticeError::AtKey { key: key.to_string(), source: Box::new(e) },
                })?;
                let grew = &merged != existing;
                if grew {
                    self.groups.insert(key, merged.clone());
                }
                Ok((merged, grew))
            }
        }
    }

    /// Pointwise merge over all keys.
    pub fn merge(&self, other: &KeyedLattice) -> Result<KeyedLattice, LatticeError> {
        let mut out = self.clone();
        for (key, point) in &other.groups {
            out.merge_at(key.clone(), point)?;
        }
        Ok(out)
    }

    pub fn leq(&self, other: &KeyedLattice) -> bool {
        self.groups.iter().all(|(key, point)| {
            other.groups.get(key).is_some_and(|o| point.leq(o))
        })
    }
}

impl fmt::Display for KeyedLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (key, point)) in self.groups.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{key}=>{point}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(items: &[&str], len: Option<usize>) -> BoundedPrefix {
        BoundedPrefix::new(items.iter().map(|s| Item::from(*s)).collect(), len).unwrap()
    }

    fn ssiv(entries: &[(usize, &str)], seal: Option<usize>) -> SealedSetIndexed {
        SealedSetIndexed::new(
            entries.iter().map(|&(p, s)| (p, Item::from(s))),
            seal,
        )
        .unwrap()
    }

    #[test]
    fn bottom_is_merge_identity() {
        let p = bp(&["a", "b"], Some(3));
        assert_eq!(BoundedPrefix::bottom().merge(&p).unwrap(), p);
        assert_eq!(p.merge(&BoundedPrefix::bottom()).unwrap(), p);
    }

    #[test]
    fn longer_prefix_wins() {
        let merged = bp(&["a"], Some(3)).merge(&bp(&["a", "b"], Some(3))).unwrap();
        assert_eq!(merged, bp(&["a", "b"], Some(3)));
    }

    #[test]
    fn merge_is_idempotent() {
        let p = bp(&["a", "b"], Some(3));
        assert_eq!(p.merge(&p).unwrap(), p);
    }

    #[test]
    fn divergent_prefixes_are_incomparable() {
        let err = bp(&["a"], Some(3)).merge(&bp(&["b"], Some(3))).unwrap_err();
        assert!(matches!(err, LatticeError::IncomparableLattices(_)));
    }

    #[test]
    fn conflicting_lengths_are_incomparable() {
        let err = bp(&["a"], Some(2)).merge(&bp(&["a"], Some(3))).unwrap_err();
        assert!(matches!(err, LatticeError::IncomparableLattices(_)));
    }

    #[test]
    fn merge_unions_length_knowledge() {
        let merged = bp(&["a", "b"], None).merge(&bp(&["a"], Some(2))).unwrap();
        assert_eq!(merged, bp(&["a", "b"], Some(2)));
        assert!(merged.is_top());
    }

    #[test]
    fn bp_top_detection() {
        assert!(bp(&["x", "y", "z"], Some(3)).is_top());
        assert!(!bp(&["x"], Some(3)).is_top());
        assert!(bp(&[], Some(0)).is_top());
        assert!(!BoundedPrefix::bottom().is_top());
    }

    #[test]
    fn bp_rejects_prefix_longer_than_declared() {
        assert!(BoundedPrefix::new(vec![Item::from("a")], Some(0)).is_err());
    }

    #[test]
    fn ssiv_merge_unions_entries_and_seal() {
        let merged = ssiv(&[(0, "a")], None)
            .merge(&ssiv(&[(1, "b")], Some(2)))
            .unwrap();
        assert_eq!(merged, ssiv(&[(0, "a"), (1, "b")], Some(2)));
        assert!(merged.is_top());
    }

    #[test]
    fn ssiv_two_entry_merge_is_order_independent() {
        // Brute force over every delivery interleaving (with duplicates) of
        // the two singletons.
        let parts = [ssiv(&[(0, "a")], None), ssiv(&[(1, "b")], Some(2))];
        let orders: &[&[usize]] = &[
            &[0, 1],
            &[1, 0],
            &[0, 0, 1],
            &[0, 1, 0],
            &[1, 0, 0],
            &[1, 1, 0],
            &[1, 0, 1],
            &[0, 1, 1],
            &[0, 1, 0, 1],
            &[1, 0, 1, 0],
        ];
        let expect = ssiv(&[(0, "a"), (1, "b")], Some(2));
        for order in orders {
            let mut acc = SealedSetIndexed::bottom();
            for &i in *order {
                acc = acc.merge(&parts[i]).unwrap();
            }
            assert_eq!(acc, expect, "order {order:?}");
        }
    }

    #[test]
    fn ssiv_conflicting_entry_is_an_error() {
        let err = ssiv(&[(0, "a")], None).merge(&ssiv(&[(0, "b")], None)).unwrap_err();
        assert!(matches!(err, LatticeError::ConflictingEntry { pos: 0, .. }));
    }

    #[test]
    fn ssiv_conflicting_seal_is_an_error() {
        let err = ssiv(&[], Some(1)).merge(&ssiv(&[], Some(2))).unwrap_err();
        assert_eq!(err, LatticeError::ConflictingSeal(1, 2));
    }

    #[test]
    fn ssiv_position_beyond_seal_is_an_error() {
        assert!(matches!(
            SealedSetIndexed::new([(2, Item::from("c"))], Some(2)).unwrap_err(),
            LatticeError::PositionBeyondSeal { pos: 2, seal: 2 }
        ));
        let err = ssiv(&[(2, "c")], None).merge(&ssiv(&[], Some(2))).unwrap_err();
        assert!(matches!(err, LatticeError::PositionBeyondSeal { .. }));
    }

    #[test]
    fn ssiv_top_detection() {
        assert!(ssiv(&[(0, "a"), (1, "b")], Some(2)).is_top());
        assert!(!ssiv(&[(0, "a")], Some(2)).is_top());
        assert!(SealedSetIndexed::sealed_empty(0).is_top());
    }

    #[test]
    fn bp_to_ssiv_reindexes() {
        let p = bp(&["a", "b"], Some(3));
        assert_eq!(p.to_ssiv(), ssiv(&[(0, "a"), (1, "b")], Some(3)));
    }

    #[test]
    fn ssiv_to_bp_projects_contiguous_prefix() {
        let gappy = ssiv(&[(0, "a"), (2, "c")], Some(3));
        assert_eq!(gappy.to_bounded_prefix(), bp(&["a"], Some(3)));
        assert_eq!(gappy.to_bounded_prefix_exact(), None);

        let full = ssiv(&[(0, "a"), (1, "b")], Some(3));
        assert_eq!(full.to_bounded_prefix_exact(), Some(bp(&["a", "b"], Some(3))));
    }

    #[test]
    fn bp_ssiv_round_trip_is_identity() {
        for p in [
            BoundedPrefix::bottom(),
            bp(&["a"], None),
            bp(&["a", "b"], Some(3)),
            bp(&[], Some(0)),
        ] {
            assert_eq!(p.to_ssiv().to_bounded_prefix_exact(), Some(p.clone()));
        }
    }

    #[test]
    fn keyed_merge_is_pointwise() {
        let mut a = KeyedLattice::new();
        a.merge_at(Item::from("k1"), &LatticePoint::Bp(bp(&["a"], Some(2))))
            .unwrap();
        let mut b = KeyedLattice::new();
        b.merge_at(Item::from("k2"), &LatticePoint::Bp(bp(&["x"], Some(1))))
            .unwrap();

        let empty = KeyedLattice::new();
        assert_eq!(a.merge(&empty).unwrap(), a);
        let ab = a.merge(&b).unwrap();
        assert_eq!(ab.groups().len(), 2);
        assert_eq!(ab.merge(&a).unwrap(), ab);
    }

    #[test]
    fn keyed_merge_tags_errors_with_key() {
        let mut a = KeyedLattice::new();
        a.merge_at(Item::from("k"), &LatticePoint::Bp(bp(&["a"], None))).unwrap();
        let mut b = KeyedLattice::new();
        b.merge_at(Item::from("k"), &LatticePoint::Bp(bp(&["b"], None))).unwrap();
        match a.merge(&b).unwrap_err() {
            LatticeError::AtKey { key, .. } => assert_eq!(key, "k"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn keyed_merge_rejects_kind_mismatch_per_key() {
        let mut a = KeyedLattice::new();
        a.merge_at(Item::from("k"), &LatticePoint::Bp(bp(&["a"], None))).unwrap();
        let mut b = KeyedLattice::new();
        b.merge_at(Item::from("k"), &LatticePoint::Ssiv(ssiv(&[(0, "a")], None)))
            .unwrap();
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn keyed_merge_three_points_all_orders() {
        // All 12 order/parenthesization combinations of three keyed points.
        let mut points = Vec::new();
        for (key, item, len) in [("k1", "a", 3), ("k2", "x", 1), ("k1", "a", 3)] {
            let mut k = KeyedLattice::new();
            k.merge_at(Item::from(key), &LatticePoint::Bp(bp(&[item], Some(len))))
                .unwrap();
            points.push(k);
        }
        let mut results = Vec::new();
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let [a, b, c] = perm.map(|i| points[i].clone());
            results.push(a.merge(&b).unwrap().merge(&c).unwrap());
            results.push(a.merge(&b.merge(&c).unwrap()).unwrap());
        }
        assert_eq!(results.len(), 12);
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn partial_order_agrees_with_merge() {
        let small = bp(&["a"], None);
        let big = bp(&["a", "b"], Some(3));
        assert!(small.leq(&big));
        assert_eq!(small.merge(&big).unwrap(), big);
        assert!(!big.leq(&small));
    }

    #[test]
    fn display_matches_canonical_encoding() {
        assert_eq!(bp(&["a", "b"], Some(3)).to_string(), "bp(a,b|len=3)");
        assert_eq!(BoundedPrefix::bottom().to_string(), "bp(|len=?)");
        assert_eq!(ssiv(&[(0, "a")], Some(2)).to_string(), "ssiv{0:a|seal=2}");
        assert_eq!(SealedSetIndexed::bottom().to_string(), "ssiv{|seal=?}");
    }
}
