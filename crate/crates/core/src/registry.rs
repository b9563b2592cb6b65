//! The function registry: named built-ins referenced from DSL programs.
//!
//! The DSL never carries code; `map(fmt_kv)` names an entry here. Each
//! entry declares the algebraic properties the safety analysis composes
//! (purity, lattice-morphism, pointwise-over-items) and, where useful, an
//! attribute-shape transform so rewrites can reason about keys.
//!
//! Records follow a flat key/value convention: every attribute except the
//! last is key, the last attribute is the payload. `fmt_kv` turns the join
//! output `(client, li, class)` into the group_by input `(client, class,
//! li)` under that convention.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ir::Param;
use crate::value::{decode_item, Record, Value};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}`: {msg}")]
    BadInput { name: String, msg: String },
}

/// Declared algebraic properties of a registered function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FnProps {
    /// Deterministic, side-effect free.
    pub pure: bool,
    /// Commutes with lattice merge; safe downstream of a network edge.
    pub morphism: bool,
    /// Acts item-by-item on lattice payloads, so it can move across
    /// odiff/append boundaries.
    pub pointwise: bool,
    /// For fold steps: insensitive to argument order. The sequence-append
    /// fold is not.
    pub commutative_fold: bool,
}

impl FnProps {
    const PURE_MORPHISM: FnProps =
        FnProps { pure: true, morphism: true, pointwise: false, commutative_fold: false };
}

type MapImpl = fn(&Record, &[Param]) -> Result<Record, RegistryError>;
type ItemImpl = fn(&Value) -> Value;
/// Attribute-name transform declared alongside a function.
pub type ShapeFn = fn(&[String]) -> Vec<String>;

/// What a registered name does when invoked.
#[derive(Clone)]
pub enum FnImpl {
    /// Record-to-record map.
    Map(MapImpl),
    /// Pointwise item action, applied to every item of a lattice payload.
    PointwiseMap(ItemImpl),
    /// group_by fold initializer.
    FoldInit(fn() -> Value),
    /// group_by fold step: accumulator, arriving payload.
    FoldStep(fn(Value, &Value) -> Value),
    /// group_by lattice bottom.
    LatticeBot(fn() -> Value),
    /// group_by lattice merge, by name; the runtime dispatches on the
    /// payload's lattice kind.
    LatticeMerge,
}

#[derive(Clone)]
pub struct FnEntry {
    pub props: FnProps,
    pub imp: FnImpl,
    /// Attribute-shape transform: given input attribute names, the output
    /// names. `None` means unknown/identity-for-analysis-purposes.
    pub shape: Option<ShapeFn>,
}

/// Registry of named functions plus declared stream record shapes.
#[derive(Clone, Default)]
pub struct FunctionRegistry {
    entries: BTreeMap<String, FnEntry>,
    stream_shapes: BTreeMap<String, Vec<String>>,
}

impl FunctionRegistry {
    pub fn get(&self, name: &str) -> Result<&FnEntry, RegistryError> {
        self.entries
            .get(name)
            .ok_or_else(|| RegistryError::UnknownFunction(name.to_string()))
    }

    pub fn props(&self, name: &str) -> Result<FnProps, RegistryError> {
        Ok(self.get(name)?.props)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn register(&mut self, name: &str, entry: FnEntry) {
        self.entries.insert(name.to_string(), entry);
    }

    pub fn declare_stream(&mut self, name: &str, attrs: &[&str]) {
        self.stream_shapes
            .insert(name.to_string(), attrs.iter().map(|s| s.to_string()).collect());
    }

    pub fn stream_shape(&self, name: &str) -> Option<&[String]> {
        self.stream_shapes.get(name).map(|v| v.as_slice())
    }

    /// True when the pair (init, step) is a lattice-flavored group_by.
    pub fn is_lattice_group(&self, init: &str, step: &str) -> bool {
        matches!(
            (self.entries.get(init).map(|e| &e.imp), self.entries.get(step).map(|e| &e.imp)),
            (Some(FnImpl::LatticeBot(_)), Some(FnImpl::LatticeMerge))
        )
    }

    /// The standard registry used by the shopping-cart corpus.
    pub fn builtin() -> FunctionRegistry {
        let mut r = FunctionRegistry::default();

        r.register("fmt_kv", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::Map(fmt_kv),
            shape: Some(|attrs| {
                // (k…, v, class) -> (k…, class, v): the payload moves last.
                let mut out = attrs.to_vec();
                if out.len() >= 2 {
                    let n = out.len();
                    out.swap(n - 2, n - 1);
                }
                out
            }),
        });
        r.register("tag_out_addr", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::Map(tag_out_addr),
            shape: Some(with_addr),
        });
        r.register("tag_addr", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::Map(tag_addr),
            shape: Some(with_addr),
        });
        r.register("route_client", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::Map(route_client),
            shape: Some(with_addr),
        });
        r.register("detag", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::Map(detag),
            shape: Some(|attrs| {
                attrs.iter().filter(|a| a.as_str() != "addr").cloned().collect()
            }),
        });
        r.register("uppercase_items", FnEntry {
            props: FnProps {
                pure: true,
                morphism: true,
                pointwise: true,
                commutative_fold: false,
            },
            imp: FnImpl::PointwiseMap(uppercase_value),
            shape: None,
        });

        r.register("vec_bot", FnEntry {
            props: FnProps { pure: true, morphism: false, pointwise: false, commutative_fold: false },
            imp: FnImpl::FoldInit(|| Value::Seq(Vec::new())),
            shape: None,
        });
        r.register("vec_push", FnEntry {
            props: FnProps { pure: true, morphism: false, pointwise: false, commutative_fold: false },
            imp: FnImpl::FoldStep(vec_push),
            shape: None,
        });

        r.register("bp_bot", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::LatticeBot(|| {
                Value::Lattice(crate::lattice::LatticePoint::Bp(
                    crate::lattice::BoundedPrefix::bottom(),
                ))
            }),
            shape: None,
        });
        r.register("bp_merge", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::LatticeMerge,
            shape: None,
        });
        r.register("ssiv_bot", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::LatticeBot(|| {
                Value::Lattice(crate::lattice::LatticePoint::Ssiv(
                    crate::lattice::SealedSetIndexed::bottom(),
                ))
            }),
            shape: None,
        });
        r.register("ssiv_merge", FnEntry {
            props: FnProps::PURE_MORPHISM,
            imp: FnImpl::LatticeMerge,
            shape: None,
        });

        r.declare_stream("shopping", &["client", "li"]);
        r.declare_stream("shopping_bp", &["client", "cart"]);
        r.declare_stream("shopping_ssiv", &["client", "cart"]);
        r.declare_stream("client_class", &["client", "class"]);
        r.declare_stream("server_addrs", &["addr"]);
        r
    }
}

fn with_addr(attrs: &[String]) -> Vec<String> {
    let mut out = attrs.to_vec();
    out.push("addr".to_string());
    out
}

/// `(k…, v, class) -> (k…, class, v)`: rotate the looked-up attribute into
/// the key so the payload sits last.
fn fmt_kv(record: &Record, _params: &[Param]) -> Result<Record, RegistryError> {
    let attrs = record.attrs();
    if attrs.len() < 2 {
        return Err(RegistryError::BadInput {
            name: "fmt_kv".to_string(),
            msg: format!("need at least 2 attributes, got {record}"),
        });
    }
    let mut attrs = attrs.to_vec();
    let n = attrs.len();
    attrs.swap(n - 2, n - 1);
    Ok(Record::new(attrs))
}

fn tag_out_addr(record: &Record, _params: &[Param]) -> Result<Record, RegistryError> {
    let mut out = record.clone();
    out.push("addr", Value::str("out_addr"));
    Ok(out)
}

/// Tags with the address given as the map's extra parameter.
fn tag_addr(record: &Record, params: &[Param]) -> Result<Record, RegistryError> {
    let addr = params.first().and_then(|p| p.as_ident()).ok_or_else(|| {
        RegistryError::BadInput {
            name: "tag_addr".to_string(),
            msg: "missing address parameter".to_string(),
        }
    })?;
    let mut out = record.clone();
    out.push("addr", Value::str(addr));
    Ok(out)
}

/// Routes by client id: params are (assign_seed, replica…); the record's
/// `client` attribute picks one replica via a seeded hash. Stable per
/// client, so one client's requests land on one replica.
fn route_client(record: &Record, params: &[Param]) -> Result<Record, RegistryError> {
    let bad = |msg: &str| RegistryError::BadInput {
        name: "route_client".to_string(),
        msg: msg.to_string(),
    };
    let seed = params
        .first()
        .and_then(|p| p.as_int())
        .ok_or_else(|| bad("missing seed parameter"))?;
    let replicas: Vec<&str> = params[1..].iter().filter_map(|p| p.as_ident()).collect();
    if replicas.is_empty() {
        return Err(bad("no replicas listed"));
    }
    let client = match record.get("client") {
        Some(Value::Int(n)) => *n,
        _ => return Err(bad("record has no integer `client` attribute")),
    };
    let mut h = (client as u64) ^ (seed as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 31;
    let chosen = replicas[(h % replicas.len() as u64) as usize];
    let mut out = record.clone();
    out.push("addr", Value::str(chosen));
    Ok(out)
}

/// Strips the `addr` attribute added on the sending side.
fn detag(record: &Record, _params: &[Param]) -> Result<Record, RegistryError> {
    match record.without("addr") {
        Some((out, _)) => Ok(out),
        None => Err(RegistryError::BadInput {
            name: "detag".to_string(),
            msg: format!("record has no `addr` attribute: {record}"),
        }),
    }
}

fn vec_push(acc: Value, payload: &Value) -> Value {
    match acc {
        Value::Seq(mut items) => {
            items.push(payload.clone());
            Value::Seq(items)
        }
        other => Value::Seq(vec![other, payload.clone()]),
    }
}

fn uppercase_value(v: &Value) -> Value {
    match v {
        Value::Str(s) => Value::Str(s.to_uppercase()),
        Value::Record(r) => Value::Record(Record::new(
            r.attrs()
                .iter()
                .map(|(n, v)| (n.clone(), uppercase_value(v)))
                .collect(),
        )),
        Value::Seq(items) => Value::Seq(items.iter().map(uppercase_value).collect()),
        other => other.clone(),
    }
}

/// Applies a pointwise item action to every item inside a lattice payload,
/// or to a plain value directly. Returns the rewritten value and how many
/// item applications happened.
pub fn apply_pointwise(f: ItemImpl, value: &Value) -> (Value, u64) {
    use crate::lattice::{BoundedPrefix, LatticePoint, SealedSetIndexed};
    match value {
        Value::Lattice(LatticePoint::Bp(p)) => {
            let mut count = 0;
            let items = p
                .prefix()
                .iter()
                .map(|item| {
                    count += 1;
                    rewrite_item(f, item)
                })
                .collect();
            let point = BoundedPrefix::new(items, p.declared_len()).expect("lengths unchanged");
            (Value::Lattice(LatticePoint::Bp(point)), count)
        }
        Value::Lattice(LatticePoint::Ssiv(p)) => {
            let mut count = 0;
            let entries: Vec<_> = p
                .entries()
                .iter()
                .map(|(&pos, item)| {
                    count += 1;
                    (pos, rewrite_item(f, item))
                })
                .collect();
            let point = SealedSetIndexed::new(entries, p.seal()).expect("positions unchanged");
            (Value::Lattice(LatticePoint::Ssiv(point)), count)
        }
        other => (f(other), 1),
    }
}

fn rewrite_item(f: ItemImpl, item: &crate::lattice::Item) -> crate::lattice::Item {
    match decode_item(item) {
        Ok(v) => f(&v).to_item(),
        Err(_) => item.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(attrs: &[(&str, Value)]) -> Record {
        Record::new(attrs.iter().map(|(n, v)| (n.to_string(), v.clone())).collect())
    }

    #[test]
    fn fmt_kv_rotates_payload_last() {
        let input = rec(&[
            ("client", Value::Int(1)),
            ("li", Value::str("x")),
            ("class", Value::str("basic")),
        ]);
        let out = fmt_kv(&input, &[]).unwrap();
        assert_eq!(out.attr_names(), vec!["client", "class", "li"]);
    }

    #[test]
    fn tag_and_detag_are_inverses() {
        let input = rec(&[("client", Value::Int(1))]);
        let tagged = tag_addr(&input, &[Param::ident("server")]).unwrap();
        assert_eq!(tagged.get("addr"), Some(&Value::str("server")));
        let (back, _) = tagged.without("addr").unwrap();
        assert_eq!(back, input);
    }

    #[test]
    fn route_client_is_stable_and_in_range() {
        let replicas = [Param::Int(42), Param::ident("s1"), Param::ident("s2"), Param::ident("s3")];
        for client in 0..20 {
            let input = rec(&[("client", Value::Int(client))]);
            let a = route_client(&input, &replicas).unwrap();
            let b = route_client(&input, &replicas).unwrap();
            assert_eq!(a, b);
            let addr = a.get("addr").unwrap();
            assert!(matches!(addr, Value::Str(s) if s.starts_with('s')));
        }
    }

    #[test]
    fn lattice_group_detection() {
        let r = FunctionRegistry::builtin();
        assert!(r.is_lattice_group("bp_bot", "bp_merge"));
        assert!(r.is_lattice_group("ssiv_bot", "ssiv_merge"));
        assert!(!r.is_lattice_group("vec_bot", "vec_push"));
        assert!(!r.is_lattice_group("vec_bot", "bp_merge"));
    }

    #[test]
    fn pointwise_uppercases_every_item_once() {
        use crate::lattice::{BoundedPrefix, LatticePoint};
        let point = BoundedPrefix::new(
            vec![Value::str("a").to_item(), Value::str("b").to_item()],
            Some(3),
        )
        .unwrap();
        let (out, count) = apply_pointwise(uppercase_value, &Value::Lattice(LatticePoint::Bp(point)));
        assert_eq!(count, 2);
        match out {
            Value::Lattice(LatticePoint::Bp(p)) => {
                assert_eq!(decode_item(&p.prefix()[0]).unwrap(), Value::str("A"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
