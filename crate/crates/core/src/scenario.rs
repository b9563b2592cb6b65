//! Shopping-cart scenarios: the client/class table, per-client request
//! sessions, and the derived stream views that sources draw from.
//!
//! A session is an ordered list of line items with a declared length equal
//! to its request count. The raw `shopping` stream interleaves clients
//! round-robin; `shopping_bp` streams growing prefixes tagged with the
//! session length; `shopping_ssiv` streams indexed singletons with the seal
//! piggybacked on the last one.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BoundedPrefix, LatticePoint, SealedSetIndexed};
use crate::value::{Record, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClientClass {
    Basic,
    Prime,
}

impl ClientClass {
    pub fn name(&self) -> &'static str {
        match self {
            ClientClass::Basic => "basic",
            ClientClass::Prime => "prime",
        }
    }

    pub fn parse(s: &str) -> Option<ClientClass> {
        match s {
            "basic" => Some(ClientClass::Basic),
            "prime" => Some(ClientClass::Prime),
            _ => None,
        }
    }
}

impl fmt::Display for ClientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One request: add (positive) or delete (negative) a quantity of an item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LineItem {
    pub item: String,
    pub qty: i64,
}

impl LineItem {
    pub fn new(item: impl Into<String>, qty: i64) -> LineItem {
        LineItem { item: item.into(), qty }
    }

    pub fn to_value(&self) -> Value {
        Value::Record(Record::new(vec![
            ("item".into(), Value::Str(self.item.clone())),
            ("qty".into(), Value::Int(self.qty)),
        ]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSession {
    pub client: i64,
    pub class: ClientClass,
    pub requests: Vec<LineItem>,
}

/// A full scenario: each client appears once (so client -> class is a
/// functional dependency by construction) with one finite session whose
/// declared length is its request count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub clients: Vec<ClientSession>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Format(String),
    #[error("client {0} appears twice")]
    DuplicateClient(i64),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

const WORDS: &[&str] = &[
    "apple", "banana", "fig", "kiwi", "lime", "mango", "pear", "plum", "date", "grape",
];

impl Scenario {
    /// The fixed reference scenario: client 1 orders 2 apples, 2 more
    /// apples, then deletes 4 apples.
    pub fn apples() -> Scenario {
        Scenario {
            clients: vec![ClientSession {
                client: 1,
                class: ClientClass::Basic,
                requests: vec![
                    LineItem::new("apple", 2),
                    LineItem::new("apple", 2),
                    LineItem::new("apple", -4),
                ],
            }],
        }
    }

    /// Deterministic generator: clients 1..=n, classes round-robin, session
    /// lengths in 1..=max (0 when max is 0), quantities in [-5, 5] without 0.
    pub fn generate(seed: u64, n_clients: u32, max_session_len: u32) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clients = Vec::new();
        for i in 0..n_clients {
            let class = if i % 2 == 0 { ClientClass::Basic } else { ClientClass::Prime };
            let len = if max_session_len == 0 {
                0
            } else {
                rng.random_range(1..=max_session_len)
            };
            let mut requests = Vec::new();
            for _ in 0..len {
                let item = WORDS[rng.random_range(0..WORDS.len())];
                let qty = loop {
                    let q = rng.random_range(-5..=5i64);
                    if q != 0 {
                        break q;
                    }
                };
                requests.push(LineItem::new(item, qty));
            }
            clients.push(ClientSession { client: i64::from(i) + 1, class, requests });
        }
        Scenario { clients }
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        let mut clients = Vec::new();
        for decl in file.client {
            if clients.iter().any(|c: &ClientSession| c.client == decl.id) {
                return Err(ScenarioError::DuplicateClient(decl.id));
            }
            let class = ClientClass::parse(&decl.class)
                .ok_or_else(|| ScenarioError::UnknownClass(decl.class.clone()))?;
            let requests = decl
                .session
                .into_iter()
                .map(|(item, qty)| LineItem::new(item, qty))
                .collect();
            clients.push(ClientSession { client: decl.id, class, requests });
        }
        Ok(Scenario { clients })
    }

    pub fn to_toml(&self) -> String {
        let file = ScenarioFile {
            client: self
                .clients
                .iter()
                .map(|c| ClientDecl {
                    id: c.client,
                    class: c.class.name().to_string(),
                    session: c.requests.iter().map(|li| (li.item.clone(), li.qty)).collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    /// The `client_class` table.
    pub fn client_class_records(&self) -> Vec<Record> {
        self.clients
            .iter()
            .map(|c| {
                Record::new(vec![
                    ("client".into(), Value::Int(c.client)),
                    ("class".into(), Value::str(c.class.name())),
                ])
            })
            .collect()
    }

    /// Raw request stream `(client, li)`, clients interleaved round-robin
    /// by request position.
    pub fn shopping_records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        let longest = self.clients.iter().map(|c| c.requests.len()).max().unwrap_or(0);
        for pos in 0..longest {
            for c in &self.clients {
                if let Some(li) = c.requests.get(pos) {
                    out.push(Record::new(vec![
                        ("client".into(), Value::Int(c.client)),
                        ("li".into(), li.to_value()),
                    ]));
                }
            }
        }
        out
    }

    /// Sessionized stream of growing prefixes `(client, cart)`, every point
    /// tagged with the session length. An empty session contributes its top
    /// (the empty sealed prefix).
    pub fn shopping_bp_records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        let longest = self.clients.iter().map(|c| c.requests.len()).max().unwrap_or(0);
        for c in &self.clients {
            if c.requests.is_empty() {
                out.push(bp_record(c, 0));
            }
        }
        for pos in 0..longest {
            for c in &self.clients {
                if pos < c.requests.len() {
                    out.push(bp_record(c, pos + 1));
                }
            }
        }
        out
    }

    /// Sessionized stream of indexed singletons `(client, cart)`, the seal
    /// piggybacked on each session's last element. An empty session
    /// contributes a bare seal.
    pub fn shopping_ssiv_records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        let longest = self.clients.iter().map(|c| c.requests.len()).max().unwrap_or(0);
        for c in &self.clients {
            if c.requests.is_empty() {
                out.push(ssiv_seal_record(c));
            }
        }
        for pos in 0..longest {
            for c in &self.clients {
                if pos < c.requests.len() {
                    out.push(ssiv_record(c, pos));
                }
            }
        }
        out
    }

    /// Resolves a DSL source name to its stream view.
    pub fn stream(&self, name: &str) -> Option<Vec<Record>> {
        match name {
            "shopping" => Some(self.shopping_records()),
            "shopping_bp" => Some(self.shopping_bp_records()),
            "shopping_ssiv" => Some(self.shopping_ssiv_records()),
            "client_class" => Some(self.client_class_records()),
            _ => None,
        }
    }

    /// The sequential-fold oracle: for each client, the full session in
    /// order, keyed by (client, class). This is what every variant's sealed
    /// outputs must equal.
    pub fn oracle(&self) -> Vec<(i64, ClientClass, Vec<LineItem>)> {
        let mut out: Vec<_> = self
            .clients
            .iter()
            .map(|c| (c.client, c.class, c.requests.clone()))
            .collect();
        out.sort();
        out
    }
}

fn bp_record(c: &ClientSession, prefix_len: usize) -> Record {
    let items = c.requests[..prefix_len].iter().map(|li| li.to_value().to_item()).collect();
    let point = BoundedPrefix::new(items, Some(c.requests.len())).expect("prefix fits");
    Record::new(vec![
        ("client".into(), Value::Int(c.client)),
        ("cart".into(), Value::Lattice(LatticePoint::Bp(point))),
    ])
}

fn ssiv_record(c: &ClientSession, pos: usize) -> Record {
    let seal = (pos + 1 == c.requests.len()).then_some(c.requests.len());
    let point = SealedSetIndexed::singleton(pos, c.requests[pos].to_value().to_item(), seal)
        .expect("position below seal");
    Record::new(vec![
        ("client".into(), Value::Int(c.client)),
        ("cart".into(), Value::Lattice(LatticePoint::Ssiv(point))),
    ])
}

fn ssiv_seal_record(c: &ClientSession) -> Record {
    Record::new(vec![
        ("client".into(), Value::Int(c.client)),
        ("cart".into(), Value::Lattice(LatticePoint::Ssiv(SealedSetIndexed::sealed_empty(0)))),
    ])
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    client: Vec<ClientDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClientDecl {
    id: i64,
    class: String,
    #[serde(default)]
    session: Vec<(String, i64)>,
}
