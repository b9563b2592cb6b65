//! The dataflow intermediate representation: operator nodes with typed
//! ports, edges, named sub-pipelines, and multi-node deployments.
//!
//! Graphs are DAGs. All intra-graph edges are local ordered edges; network
//! communication is expressed as a `dest_sink_serde`/`source_stream_serde`
//! pair wired through a named channel at the deployment level.

mod canon;
mod deploy;
mod parse;

pub use canon::{graphs_isomorphic, graphs_isomorphic_modulo_params, serialize_graph};
pub use deploy::{ChannelDecl, Deployment, DeployError, FunctionalDependency};
pub use parse::{parse_dsl, DslError};

use std::collections::BTreeMap;
use std::fmt;

/// Operator kinds, the full set used by the corpus programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperatorKind {
    SourceIter,
    SourceStream,
    SourceStreamSerde,
    Map,
    Join,
    CrossJoin,
    GroupBy,
    Tee,
    Merge,
    Unique,
    Odiff,
    Append,
    DestSinkSerde,
}

impl OperatorKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "source_iter" => Self::SourceIter,
            "source_stream" => Self::SourceStream,
            "source_stream_serde" => Self::SourceStreamSerde,
            "map" => Self::Map,
            "join" => Self::Join,
            "cross_join" => Self::CrossJoin,
            "group_by" => Self::GroupBy,
            "tee" => Self::Tee,
            "merge" => Self::Merge,
            "unique" => Self::Unique,
            "odiff" => Self::Odiff,
            "append" => Self::Append,
            "dest_sink_serde" => Self::DestSinkSerde,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SourceIter => "source_iter",
            Self::SourceStream => "source_stream",
            Self::SourceStreamSerde => "source_stream_serde",
            Self::Map => "map",
            Self::Join => "join",
            Self::CrossJoin => "cross_join",
            Self::GroupBy => "group_by",
            Self::Tee => "tee",
            Self::Merge => "merge",
            Self::Unique => "unique",
            Self::Odiff => "odiff",
            Self::Append => "append",
            Self::DestSinkSerde => "dest_sink_serde",
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(self, Self::SourceIter | Self::SourceStream | Self::SourceStreamSerde)
    }

    pub fn is_sink(&self) -> bool {
        matches!(self, Self::DestSinkSerde)
    }

    /// Number of input ports. Merge has one port accepting many edges.
    pub fn input_ports(&self) -> usize {
        match self {
            k if k.is_source() => 0,
            Self::Join | Self::CrossJoin => 2,
            _ => 1,
        }
    }

    pub fn has_output(&self) -> bool {
        !self.is_sink()
    }

    /// (min, max) accepted parameter counts.
    pub fn param_arity(&self) -> (usize, usize) {
        match self {
            Self::SourceIter | Self::SourceStream | Self::SourceStreamSerde
            | Self::DestSinkSerde => (1, 1),
            Self::Map => (1, usize::MAX),
            Self::GroupBy => (2, 2),
            Self::Append => (0, 1),
            Self::Join | Self::CrossJoin | Self::Tee | Self::Merge | Self::Unique
            | Self::Odiff => (0, 0),
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named argument of an operator: a registered function name, a channel
/// or stream name, or a literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Ident(String),
    Int(i64),
}

impl Param {
    pub fn ident(s: impl Into<String>) -> Param {
        Param::Ident(s.into())
    }

    pub fn as_ident(&self) -> Option<&str> {
        match self {
            Param::Ident(s) => Some(s),
            Param::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Param::Int(n) => Some(*n),
            Param::Ident(_) => None,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Ident(s) => f.write_str(s),
            Param::Int(n) => write!(f, "{n}"),
        }
    }
}

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorNode {
    pub id: NodeId,
    pub kind: OperatorKind,
    pub params: Vec<Param>,
}

impl OperatorNode {
    /// First parameter as an identifier: the stream, channel, or function
    /// name for the kinds that carry one.
    pub fn first_ident(&self) -> Option<&str> {
        self.params.first().and_then(|p| p.as_ident())
    }

    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        format!("{}({})", self.kind, params.join(", "))
    }
}

/// Edge semantics. Within a graph every edge is local ordered; the network
/// variant names the channel realizing a cut between deployment nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeKind {
    LocalOrdered,
    NetworkChannel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    /// Named output port (tee); `None` is the default port.
    pub from_port: Option<String>,
    pub to: NodeId,
    /// Input port index; joins use 0 and 1.
    pub to_port: usize,
    pub kind: EdgeKind,
}

/// A dataflow graph: operator nodes, typed edges, and name bindings for
/// sub-pipelines (a binding records the head and tail node of the pipeline
/// it names).
#[derive(Debug, Clone, Default)]
pub struct DataflowGraph {
    next_id: NodeId,
    nodes: BTreeMap<NodeId, OperatorNode>,
    pub edges: Vec<Edge>,
    pub bindings: BTreeMap<String, (NodeId, NodeId)>,
}

impl DataflowGraph {
    pub fn new() -> Self {
        DataflowGraph::default()
    }

    pub fn add_node(&mut self, kind: OperatorKind, params: Vec<Param>) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(id, OperatorNode { id, kind, params });
        id
    }

    pub fn add_edge(&mut self, from: NodeId, from_port: Option<String>, to: NodeId, to_port: usize) {
        self.edges.push(Edge { from, from_port, to, to_port, kind: EdgeKind::LocalOrdered });
    }

    pub fn remove_node(&mut self, id: NodeId) {
        self.nodes.remove(&id);
        self.edges.retain(|e| e.from != id && e.to != id);
        self.bindings.retain(|_, &mut (h, t)| h != id && t != id);
    }

    pub fn remove_edge(&mut self, from: NodeId, to: NodeId) {
        self.edges.retain(|e| !(e.from == from && e.to == to));
    }

    pub fn node(&self, id: NodeId) -> Option<&OperatorNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut OperatorNode> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &OperatorNode> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn in_edges(&self, id: NodeId) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.to == id).collect()
    }

    pub fn out_edges(&self, id: NodeId) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.from == id).collect()
    }

    pub fn nodes_of_kind(&self, kind: OperatorKind) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.kind == kind).map(|n| n.id).collect()
    }

    /// Topological order, or the nodes of a cycle.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, Vec<NodeId>> {
        let mut in_deg: BTreeMap<NodeId, usize> =
            self.nodes.keys().map(|&id| (id, 0)).collect();
        for e in &self.edges {
            if let Some(d) = in_deg.get_mut(&e.to) {
                *d += 1;
            }
        }
        let mut ready: Vec<NodeId> = in_deg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::new();
        while let Some(id) = ready.first().copied() {
            ready.remove(0);
            order.push(id);
            for e in self.out_edges(id) {
                let d = in_deg.get_mut(&e.to).unwrap();
                *d -= 1;
                if *d == 0 {
                    let pos = ready.binary_search(&e.to).unwrap_or_else(|p| p);
                    ready.insert(pos, e.to);
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(self
                .nodes
                .keys()
                .filter(|id| !order.contains(id))
                .copied()
                .collect())
        }
    }

    /// All nodes reachable downstream of `id` (excluding `id`).
    pub fn downstream_of(&self, id: NodeId) -> Vec<NodeId> {
        let mut seen = Vec::new();
        let mut stack: Vec<NodeId> = self.out_edges(id).iter().map(|e| e.to).collect();
        while let Some(n) = stack.pop() {
            if seen.contains(&n) {
                continue;
            }
            seen.push(n);
            stack.extend(self.out_edges(n).iter().map(|e| e.to));
        }
        seen.sort_unstable();
        seen
    }

    /// Structural validation; empty iff every invariant holds.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for e in &self.edges {
            if !self.nodes.contains_key(&e.from) || !self.nodes.contains_key(&e.to) {
                diags.push(Diagnostic::DanglingEdge { from: e.from, to: e.to });
            }
        }
        if !diags.is_empty() {
            return diags;
        }
        for node in self.nodes.values() {
            let (min, max) = node.kind.param_arity();
            let n = node.params.len();
            if n < min || n > max {
                diags.push(Diagnostic::BadParams {
                    node: node.id,
                    kind: node.kind,
                    got: n,
                });
            }
            // Input side.
            for port in 0..node.kind.input_ports() {
                let feeds = self
                    .edges
                    .iter()
                    .filter(|e| e.to == node.id && e.to_port == port)
                    .count();
                match node.kind {
                    OperatorKind::Merge => {
                        if feeds == 0 {
                            diags.push(Diagnostic::UnfedPort { node: node.id, port });
                        }
                    }
                    _ => {
                        if feeds == 0 {
                            diags.push(Diagnostic::UnfedPort { node: node.id, port });
                        } else if feeds > 1 {
                            diags.push(Diagnostic::MultipleFeeds { node: node.id, port });
                        }
                    }
                }
            }
            for e in self.in_edges(node.id) {
                if e.to_port >= node.kind.input_ports() {
                    diags.push(Diagnostic::PortOutOfRange { node: node.id, port: e.to_port });
                }
            }
            // Output side.
            let outs = self.out_edges(node.id);
            match node.kind {
                OperatorKind::DestSinkSerde => {
                    if !outs.is_empty() {
                        diags.push(Diagnostic::SinkHasOutput { node: node.id });
                    }
                }
                OperatorKind::Tee => {
                    if outs.iter().any(|e| e.from_port.is_none()) {
                        diags.push(Diagnostic::TeePortUnnamed { node: node.id });
                    }
                    if outs.is_empty() {
                        diags.push(Diagnostic::DanglingOutput { node: node.id });
                    }
                }
                _ => {
                    if outs.iter().any(|e| e.from_port.is_some()) {
                        diags.push(Diagnostic::NamedPortOnNonTee { node: node.id });
                    }
                    if outs.len() > 1 {
                        diags.push(Diagnostic::FanoutWithoutTee { node: node.id });
                    }
                    if outs.is_empty() {
                        diags.push(Diagnostic::DanglingOutput { node: node.id });
                    }
                }
            }
        }
        if let Err(cycle) = self.topo_order() {
            diags.push(Diagnostic::CycleDetected { nodes: cycle });
        }
        diags
    }
}

/// One validation finding, naming the offending node or edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    UnfedPort { node: NodeId, port: usize },
    MultipleFeeds { node: NodeId, port: usize },
    PortOutOfRange { node: NodeId, port: usize },
    BadParams { node: NodeId, kind: OperatorKind, got: usize },
    SinkHasOutput { node: NodeId },
    DanglingOutput { node: NodeId },
    DanglingEdge { from: NodeId, to: NodeId },
    TeePortUnnamed { node: NodeId },
    NamedPortOnNonTee { node: NodeId },
    FanoutWithoutTee { node: NodeId },
    CycleDetected { nodes: Vec<NodeId> },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnfedPort { node, port } => write!(f, "node {node}: input port {port} is unfed"),
            Diagnostic::MultipleFeeds { node, port } => {
                write!(f, "node {node}: input port {port} has multiple feeds")
            }
            Diagnostic::PortOutOfRange { node, port } => {
                write!(f, "node {node}: input port {port} out of range")
            }
            Diagnostic::BadParams { node, kind, got } => {
                write!(f, "node {node}: {kind} given {got} parameter(s)")
            }
            Diagnostic::SinkHasOutput { node } => write!(f, "node {node}: sink has an output edge"),
            Diagnostic::DanglingOutput { node } => {
                write!(f, "node {node}: output feeds nothing")
            }
            Diagnostic::DanglingEdge { from, to } => {
                write!(f, "edge {from}->{to} references a missing node")
            }
            Diagnostic::TeePortUnnamed { node } => {
                write!(f, "node {node}: tee output ports must be named")
            }
            Diagnostic::NamedPortOnNonTee { node } => {
                write!(f, "node {node}: named output port on a non-tee operator")
            }
            Diagnostic::FanoutWithoutTee { node } => {
                write!(f, "node {node}: multiple consumers require an explicit tee")
            }
            Diagnostic::CycleDetected { nodes } => write!(f, "cycle through nodes {nodes:?}"),
        }
    }
}

/// Validation convenience mirroring the graph method.
pub fn validate_graph(g: &DataflowGraph) -> Vec<Diagnostic> {
    g.validate()
}
