//! Parser for the dataflow DSL.
//!
//! Statements are `;`-terminated. A pipeline chains elements with `->`;
//! `[0]name` feeds a specific input port, `name[port]` draws from a named
//! output port. `name = pipeline;` binds the pipeline so other statements
//! can reference its head and tail. Function arguments are registered
//! names or integer literals, never inline code.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{DataflowGraph, NodeId, OperatorKind, Param};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unknown operator `{name}` at {line}:{col}")]
    UnknownOperator { line: usize, col: usize, name: String },
    #[error("arity error at {line}:{col}: {msg}")]
    Arity { line: usize, col: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Arrow,
    Equals,
    Semi,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, DslError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        let (l, c) = (line, col);
        let b = bytes[i];
        let mut push = |tok: Tok| toks.push(Spanned { tok, line: l, col: c });
        match b {
            b'\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            b' ' | b'\t' | b'\r' => {}
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                push(Tok::Arrow);
                i += 1;
                col += 1;
            }
            b'=' => push(Tok::Equals),
            b';' => push(Tok::Semi),
            b'[' => push(Tok::LBracket),
            b']' => push(Tok::RBracket),
            b'(' => push(Tok::LParen),
            b')' => push(Tok::RParen),
            b',' => push(Tok::Comma),
            b'-' | b'0'..=b'9' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s = std::str::from_utf8(&bytes[start..i]).unwrap();
                let n = s.parse().map_err(|e| DslError::Parse {
                    line: l,
                    col: c,
                    msg: format!("bad integer `{s}`: {e}"),
                })?;
                col += i - start;
                toks.push(Spanned { tok: Tok::Int(n), line: l, col: c });
                continue;
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                let start = i;
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let s = std::str::from_utf8(&bytes[start..i]).unwrap().to_string();
                col += i - start;
                toks.push(Spanned { tok: Tok::Ident(s), line: l, col: c });
                continue;
            }
            other => {
                return Err(DslError::Parse {
                    line: l,
                    col: c,
                    msg: format!("unexpected character {:?}", other as char),
                })
            }
        }
        i += 1;
        col += 1;
    }
    Ok(toks)
}

#[derive(Debug, Clone)]
enum PortAst {
    Num(usize),
    Name(String),
}

#[derive(Debug, Clone)]
enum Atom {
    Op { name: String, args: Vec<Param> },
    Ref(String),
}

#[derive(Debug, Clone)]
struct Element {
    in_port: Option<PortAst>,
    atom: Atom,
    out_port: Option<PortAst>,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
struct Stmt {
    binding: Option<String>,
    chain: Vec<Element>,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        let (line, col) = self.here();
        DslError::Parse { line, col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        match self.bump() {
            Some(t) if t == tok => Ok(()),
            got => Err(self.err(format!("expected {tok:?}, got {got:?}"))),
        }
    }

    fn port(&mut self) -> Result<PortAst, DslError> {
        match self.bump() {
            Some(Tok::Int(n)) if n >= 0 => Ok(PortAst::Num(n as usize)),
            Some(Tok::Ident(s)) => Ok(PortAst::Name(s)),
            got => Err(self.err(format!("expected port, got {got:?}"))),
        }
    }

    fn element(&mut self) -> Result<Element, DslError> {
        let (line, col) = self.here();
        let in_port = if self.peek() == Some(&Tok::LBracket) {
            self.bump();
            let p = self.port()?;
            self.expect(Tok::RBracket)?;
            Some(p)
        } else {
            None
        };
        let name = match self.bump() {
            Some(Tok::Ident(s)) => s,
            got => return Err(self.err(format!("expected operator or name, got {got:?}"))),
        };
        let atom = if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let mut args = Vec::new();
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    match self.bump() {
                        Some(Tok::Ident(s)) => args.push(Param::Ident(s)),
                        Some(Tok::Int(n)) => args.push(Param::Int(n)),
                        got => return Err(self.err(format!("expected argument, got {got:?}"))),
                    }
                    match self.peek() {
                        Some(Tok::Comma) => {
                            self.bump();
                        }
                        _ => break,
                    }
                }
            }
            self.expect(Tok::RParen)?;
            Atom::Op { name, args }
        } else {
            Atom::Ref(name)
        };
        let out_port = if self.peek() == Some(&Tok::LBracket) {
            self.bump();
            let p = self.port()?;
            self.expect(Tok::RBracket)?;
            Some(p)
        } else {
            None
        };
        Ok(Element { in_port, atom, out_port, line, col })
    }

    fn stmt(&mut self) -> Result<Stmt, DslError> {
        // Lookahead for `name = …`.
        let binding = if let (Some(Tok::Ident(name)), Some(s)) =
            (self.peek(), self.toks.get(self.pos + 1))
        {
            if s.tok == Tok::Equals {
                let name = name.clone();
                self.pos += 2;
                Some(name)
            } else {
                None
            }
        } else {
            None
        };
        let mut chain = vec![self.element()?];
        while self.peek() == Some(&Tok::Arrow) {
            self.bump();
            chain.push(self.element()?);
        }
        self.expect(Tok::Semi)?;
        Ok(Stmt { binding, chain })
    }
}

/// Parses DSL text into a graph. Unknown *function* names are allowed (they
/// resolve at run time); unknown *operator* kinds are an error.
pub fn parse_dsl(text: &str) -> Result<DataflowGraph, DslError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let mut stmts = Vec::new();
    while parser.peek().is_some() {
        stmts.push(parser.stmt()?);
    }

    let mut graph = DataflowGraph::new();
    // First pass: create a node per operator atom, record bindings.
    let mut node_ids: Vec<Vec<Option<NodeId>>> = Vec::new();
    for stmt in &stmts {
        let mut ids = Vec::new();
        for el in &stmt.chain {
            match &el.atom {
                Atom::Op { name, args } => {
                    let kind = OperatorKind::parse(name).ok_or(DslError::UnknownOperator {
                        line: el.line,
                        col: el.col,
                        name: name.clone(),
                    })?;
                    let (min, max) = kind.param_arity();
                    if args.len() < min || args.len() > max {
                        return Err(DslError::Arity {
                            line: el.line,
                            col: el.col,
                            msg: format!(
                                "{} takes {} parameter(s), got {}",
                                kind,
                                if min == max { min.to_string() } else { format!("{min}+") },
                                args.len()
                            ),
                        });
                    }
                    ids.push(Some(graph.add_node(kind, args.clone())));
                }
                Atom::Ref(_) => ids.push(None),
            }
        }
        node_ids.push(ids);
    }
    let mut bindings: BTreeMap<String, (NodeId, NodeId)> = BTreeMap::new();
    for (stmt, ids) in stmts.iter().zip(&node_ids) {
        if let Some(name) = &stmt.binding {
            let first = &stmt.chain[0];
            let head = match ids[0] {
                Some(id) => id,
                None => {
                    return Err(DslError::Parse {
                        line: first.line,
                        col: first.col,
                        msg: "a binding must start with an operator".to_string(),
                    })
                }
            };
            let tail = match ids.last().unwrap() {
                Some(id) => *id,
                None => {
                    return Err(DslError::Parse {
                        line: first.line,
                        col: first.col,
                        msg: "a binding must end with an operator".to_string(),
                    })
                }
            };
            if bindings.insert(name.clone(), (head, tail)).is_some() {
                return Err(DslError::Parse {
                    line: first.line,
                    col: first.col,
                    msg: format!("binding `{name}` defined twice"),
                });
            }
        }
    }

    // Second pass: resolve references and wire edges.
    let resolve = |el: &Element, ids: &[Option<NodeId>], idx: usize| -> Result<(NodeId, NodeId), DslError> {
        match (&el.atom, ids[idx]) {
            (_, Some(id)) => Ok((id, id)),
            (Atom::Ref(name), None) => bindings.get(name).copied().ok_or(DslError::Parse {
                line: el.line,
                col: el.col,
                msg: format!("unknown name `{name}`"),
            }),
            _ => unreachable!(),
        }
    };
    for (stmt, ids) in stmts.iter().zip(&node_ids) {
        for (idx, el) in stmt.chain.iter().enumerate() {
            if idx == 0 && el.in_port.is_some() {
                return Err(DslError::Arity {
                    line: el.line,
                    col: el.col,
                    msg: "input port on the head of a chain".to_string(),
                });
            }
            if idx + 1 == stmt.chain.len() && el.out_port.is_some() && stmt.chain.len() > 1 {
                return Err(DslError::Arity {
                    line: el.line,
                    col: el.col,
                    msg: "output port on the tail of a chain".to_string(),
                });
            }
        }
        for window in 0..stmt.chain.len().saturating_sub(1) {
            let (a, b) = (&stmt.chain[window], &stmt.chain[window + 1]);
            let (_, from) = resolve(a, ids, window)?;
            let (to, _) = resolve(b, ids, window + 1)?;
            let from_port = match &a.out_port {
                None => None,
                Some(PortAst::Name(s)) => Some(s.clone()),
                Some(PortAst::Num(_)) => {
                    return Err(DslError::Arity {
                        line: a.line,
                        col: a.col,
                        msg: "output ports are named, not numbered".to_string(),
                    })
                }
            };
            let to_port = match &b.in_port {
                None => 0,
                Some(PortAst::Num(n)) => *n,
                Some(PortAst::Name(_)) => {
                    return Err(DslError::Arity {
                        line: b.line,
                        col: b.col,
                        msg: "input ports are numbered, not named".to_string(),
                    })
                }
            };
            let to_node = graph.node(to).unwrap();
            if to_port >= to_node.kind.input_ports().max(1) {
                return Err(DslError::Arity {
                    line: b.line,
                    col: b.col,
                    msg: format!(
                        "{} has {} input port(s), port {} given",
                        to_node.kind,
                        to_node.kind.input_ports(),
                        to_port
                    ),
                });
            }
            graph.add_edge(from, from_port, to, to_port);
        }
    }
    graph.bindings = bindings;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Diagnostic;

    const ORIG: &str = "\
source_stream(shopping) -> [0]lookup_class;
source_iter(client_class) -> [1]lookup_class;
lookup_class = join() -> map(fmt_kv) -> group_by(vec_bot, vec_push) -> map(tag_out_addr) -> dest_sink_serde(out);
";

    #[test]
    fn parses_the_original_flow() {
        let g = parse_dsl(ORIG).unwrap();
        assert_eq!(g.node_count(), 7);
        let join = g.nodes_of_kind(OperatorKind::Join)[0];
        let feeds: Vec<usize> = g.in_edges(join).iter().map(|e| e.to_port).collect();
        assert_eq!(feeds.len(), 2);
        assert!(feeds.contains(&0) && feeds.contains(&1));
        assert!(g.validate().is_empty());
    }

    #[test]
    fn empty_input_is_an_empty_graph() {
        let g = parse_dsl("").unwrap();
        assert_eq!(g.node_count(), 0);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn unknown_operator_is_rejected() {
        match parse_dsl("x = frobnicate();").unwrap_err() {
            DslError::UnknownOperator { name, .. } => assert_eq!(name, "frobnicate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn port_misuse_is_an_arity_error() {
        assert!(matches!(
            parse_dsl("source_iter(xs) -> [2]map(f) -> dest_sink_serde(out);"),
            Err(DslError::Arity { .. })
        ));
        assert!(matches!(
            parse_dsl("group_by(one_param) -> dest_sink_serde(out);"),
            Err(DslError::Arity { .. })
        ));
    }

    #[test]
    fn unfed_join_port_is_diagnosed() {
        let g = parse_dsl(
            "source_stream(a) -> [0]j;\nj = join() -> dest_sink_serde(out);\n",
        )
        .unwrap();
        let diags = g.validate();
        assert!(diags.iter().any(|d| matches!(d, Diagnostic::UnfedPort { port: 1, .. })));
    }

    #[test]
    fn cycles_are_diagnosed() {
        let mut g = parse_dsl("m = merge() -> map(f) -> dest_sink_serde(out);").unwrap();
        // Wire the map back into the merge to force a cycle.
        let map = g.nodes_of_kind(OperatorKind::Map)[0];
        let merge = g.nodes_of_kind(OperatorKind::Merge)[0];
        g.add_edge(map, None, merge, 0);
        let diags = g.validate();
        assert!(diags.iter().any(|d| matches!(d, Diagnostic::CycleDetected { .. })));
        assert!(diags.iter().any(|d| matches!(d, Diagnostic::FanoutWithoutTee { .. })));
    }

    #[test]
    fn named_out_ports_resolve_through_bindings() {
        let g = parse_dsl(
            "source_stream(xs) -> t;\n\
             t = tee();\n\
             t[a] -> m;\n\
             t[b] -> m;\n\
             m = merge() -> dest_sink_serde(out);\n",
        )
        .unwrap();
        assert!(g.validate().is_empty());
        let tee = g.nodes_of_kind(OperatorKind::Tee)[0];
        let mut ports: Vec<Option<String>> =
            g.out_edges(tee).iter().map(|e| e.from_port.clone()).collect();
        ports.sort();
        assert_eq!(ports, vec![Some("a".to_string()), Some("b".to_string())]);
    }

    #[test]
    fn forward_references_are_allowed() {
        let g = parse_dsl(
            "source_stream(xs) -> [0]late;\nlate = join() -> dest_sink_serde(out);\nsource_iter(ys) -> [1]late;\n",
        )
        .unwrap();
        assert!(g.validate().is_empty());
    }
}
