//! Runtime values and their canonical text encoding.
//!
//! Every value has exactly one rendering, and the rendering parses back to
//! the same value. Network channels, trace files, and golden outputs all go
//! through this encoding, so a non-canonical encoder or a lossy decoder
//! shows up immediately as a test failure rather than a silent divergence.

use std::fmt;

use crate::lattice::{BoundedPrefix, Item, LatticePoint, SealedSetIndexed};

/// A single attribute value inside a [`Record`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
    Lattice(LatticePoint),
    /// An ordered sequence, used for fold accumulators (a cart assembled in
    /// arrival order).
    Seq(Vec<Value>),
    Record(Record),
}

/// One named attribute of a record.
pub type Attr = (String, Value);

/// An ordered list of named attributes. Names are unique.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Record {
    attrs: Vec<Attr>,
}

impl Record {
    pub fn new(attrs: Vec<(String, Value)>) -> Self {
        debug_assert!(
            attrs
                .iter()
                .enumerate()
                .all(|(i, (n, _))| attrs[..i].iter().all(|(m, _)| m != n)),
            "duplicate attribute name"
        );
        Record { attrs }
    }

    pub fn attrs(&self) -> &[(String, Value)] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.attrs.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn push(&mut self, name: impl Into<String>, value: Value) {
        let name = name.into();
        debug_assert!(self.get(&name).is_none(), "duplicate attribute name");
        self.attrs.push((name, value));
    }

    /// Returns a copy without the named attribute, plus the removed value.
    pub fn without(&self, name: &str) -> Option<(Record, Value)> {
        let idx = self.attrs.iter().position(|(n, _)| n == name)?;
        let mut attrs = self.attrs.clone();
        let (_, v) = attrs.remove(idx);
        Some((Record { attrs }, v))
    }

    /// Splits into (all attributes but the last, last value). The key/value
    /// convention used by join, group_by, odiff and append: the final
    /// attribute is the payload, everything before it is the key.
    pub fn split_key_value(&self) -> Option<(Vec<Attr>, Attr)> {
        let (last, key) = self.attrs.split_last()?;
        Some((key.to_vec(), last.clone()))
    }

    pub fn attr_names(&self) -> Vec<String> {
        self.attrs.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Canonical text encoding.
    pub fn encode(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (name, value)) in self.attrs.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{name}={value}")?;
        }
        write!(f, ")")
    }
}

/// True when `s` renders without quotes: an identifier that cannot be read
/// as an integer or as the head of a lattice literal.
fn is_bare(s: &str) -> bool {
    if s.is_empty() || s == "bp" || s == "ssiv" {
        return false;
    }
    let mut chars = s.chars();
    let first = chars.next().unwrap();
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    write!(f, "\"")?;
    for c in s.chars() {
        match c {
            '"' => write!(f, "\\\"")?,
            '\\' => write!(f, "\\\\")?,
            '\n' => write!(f, "\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    write!(f, "\"")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) if is_bare(s) => write!(f, "{s}"),
            Value::Str(s) => write_quoted(f, s),
            Value::Lattice(p) => write!(f, "{p}"),
            Value::Seq(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Record(r) => write!(f, "{r}"),
        }
    }
}

impl Value {
    pub fn encode(&self) -> String {
        self.to_string()
    }

    /// Canonical byte encoding, used for items and serde channels.
    pub fn encode_bytes(&self) -> Vec<u8> {
        self.to_string().into_bytes()
    }

    pub fn to_item(&self) -> Item {
        Item::new(self.encode_bytes())
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }
}

/// Error from [`decode_value`] / [`decode_record`].
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("decode error at byte {pos}: {msg}")]
pub struct DecodeError {
    pub pos: usize,
    pub msg: String,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { bytes: s.as_bytes(), pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn expect(&mut self, b: u8) -> Result<(), DecodeError> {
        match self.bump() {
            Some(got) if got == b => Ok(()),
            got => Err(self.err(format!(
                "expected {:?}, got {:?}",
                b as char,
                got.map(|g| g as char)
            ))),
        }
    }

    fn err(&self, msg: impl Into<String>) -> DecodeError {
        DecodeError { pos: self.pos, msg: msg.into() }
    }

    fn eat_ident(&mut self) -> Result<String, DecodeError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn eat_usize(&mut self) -> Result<usize, DecodeError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| self.err(format!("bad number: {e}")))
    }

    fn eat_opt_len(&mut self) -> Result<Option<usize>, DecodeError> {
        if self.peek() == Some(b'?') {
            self.bump();
            Ok(None)
        } else {
            Ok(Some(self.eat_usize()?))
        }
    }

    fn value(&mut self) -> Result<Value, DecodeError> {
        match self.peek() {
            Some(b'(') => Ok(Value::Record(self.record()?)),
            Some(b'[') => {
                self.bump();
                let mut items = Vec::new();
                if self.peek() == Some(b']') {
                    self.bump();
                    return Ok(Value::Seq(items));
                }
                loop {
                    items.push(self.value()?);
                    match self.bump() {
                        Some(b',') => continue,
                        Some(b']') => break,
                        _ => return Err(self.err("expected ',' or ']'")),
                    }
                }
                Ok(Value::Seq(items))
            }
            Some(b'"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some(b'"') => break,
                        Some(b'\\') => match self.bump() {
                            Some(b'"') => s.push('"'),
                            Some(b'\\') => s.push('\\'),
                            Some(b'n') => s.push('\n'),
                            _ => return Err(self.err("bad escape")),
                        },
                        Some(b) => s.push(b as char),
                        None => return Err(self.err("unterminated string")),
                    }
                }
                Ok(Value::Str(s))
            }
            Some(b) if b == b'-' || b.is_ascii_digit() => {
                let start = self.pos;
                if b == b'-' {
                    self.bump();
                }
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                text.parse()
                    .map(Value::Int)
                    .map_err(|e| self.err(format!("bad int: {e}")))
            }
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                let ident = self.eat_ident()?;
                match (ident.as_str(), self.peek()) {
                    ("bp", Some(b'(')) => Ok(Value::Lattice(LatticePoint::Bp(self.bp_body()?))),
                    ("ssiv", Some(b'{')) => {
                        Ok(Value::Lattice(LatticePoint::Ssiv(self.ssiv_body()?)))
                    }
                    _ => Ok(Value::Str(ident)),
                }
            }
            got => Err(self.err(format!("unexpected {:?}", got.map(|g| g as char)))),
        }
    }

    fn record(&mut self) -> Result<Record, DecodeError> {
        self.expect(b'(')?;
        let mut attrs = Vec::new();
        if self.peek() == Some(b')') {
            self.bump();
            return Ok(Record { attrs });
        }
        loop {
            let name = self.eat_ident()?;
            self.expect(b'=')?;
            let value = self.value()?;
            attrs.push((name, value));
            match self.bump() {
                Some(b',') => continue,
                Some(b')') => break,
                _ => return Err(self.err("expected ',' or ')'")),
            }
        }
        Ok(Record { attrs })
    }

    /// Body of `bp(item,…|len=n)` after the `bp` head; cursor sits on `(`.
    fn bp_body(&mut self) -> Result<BoundedPrefix, DecodeError> {
        self.expect(b'(')?;
        let mut items = Vec::new();
        while self.peek() != Some(b'|') {
            items.push(self.value()?.to_item());
            if self.peek() == Some(b',') {
                self.bump();
            }
        }
        self.expect(b'|')?;
        for b in *b"len=" {
            self.expect(b)?;
        }
        let len = self.eat_opt_len()?;
        self.expect(b')')?;
        BoundedPrefix::new(items, len).map_err(|e| self.err(e.to_string()))
    }

    /// Body of `ssiv{pos:item,…|seal=n}`; cursor sits on `{`.
    fn ssiv_body(&mut self) -> Result<SealedSetIndexed, DecodeError> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        while self.peek() != Some(b'|') {
            let pos = self.eat_usize()?;
            self.expect(b':')?;
            entries.push((pos, self.value()?.to_item()));
            if self.peek() == Some(b',') {
                self.bump();
            }
        }
        self.expect(b'|')?;
        for b in *b"seal=" {
            self.expect(b)?;
        }
        let seal = self.eat_opt_len()?;
        self.expect(b'}')?;
        SealedSetIndexed::new(entries, seal).map_err(|e| self.err(e.to_string()))
    }
}

/// Parses the canonical encoding of a single value.
pub fn decode_value(text: &str) -> Result<Value, DecodeError> {
    let mut c = Cursor::new(text);
    let v = c.value()?;
    if c.pos != c.bytes.len() {
        return Err(c.err("trailing input"));
    }
    Ok(v)
}

/// Parses the canonical encoding of a record.
pub fn decode_record(text: &str) -> Result<Record, DecodeError> {
    match decode_value(text)? {
        Value::Record(r) => Ok(r),
        other => Err(DecodeError { pos: 0, msg: format!("not a record: {other}") }),
    }
}

/// Decodes an opaque lattice item back into the value it encodes.
pub fn decode_item(item: &Item) -> Result<Value, DecodeError> {
    let text = std::str::from_utf8(item.bytes())
        .map_err(|e| DecodeError { pos: 0, msg: format!("item is not utf-8: {e}") })?;
    decode_value(text)
}
