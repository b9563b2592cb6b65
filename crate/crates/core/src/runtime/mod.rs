//! Deterministic tick-based executor for deployments.
//!
//! The whole deployment runs on one logical thread: nodes advance
//! round-robin in name order, and within a node operators fire in
//! topological order. Every intra-graph edge is a local ordered channel;
//! cross-node channels go through netsim with their declared adversarial
//! parameters. A run is a pure function of (deployment, scenario, seeds):
//! repeating it yields byte-identical outputs and traces.
//!
//! Records follow the flat key/value convention: all attributes except the
//! last form the key, the last attribute is the payload.

mod step;

pub use step::{standalone_op, step_operator, OpState};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ir::{DataflowGraph, Deployment, DeployError, NodeId, OperatorKind};
use crate::lattice::{KeyedLattice, LatticeError};
use crate::netsim::{AdversarialParams, Channel, ChannelKind};
use crate::registry::{FunctionRegistry, RegistryError};
use crate::scenario::Scenario;
use crate::value::{decode_record, Record, Value};

pub const DEFAULT_TICK_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("tick limit {0} exceeded without quiescence")]
    TickLimitExceeded(u64),
    #[error("node `{node}` op n{op}: {msg}")]
    TypeError { node: String, op: NodeId, msg: String },
    #[error("node `{node}` op n{op}: {source}")]
    Lattice {
        node: String,
        op: NodeId,
        #[source]
        source: LatticeError,
    },
    #[error("node `{node}` op n{op}: {source}")]
    Registry {
        node: String,
        op: NodeId,
        #[source]
        source: RegistryError,
    },
    #[error("unknown stream `{0}`")]
    UnknownStream(String),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error("graph for node `{node}` is invalid: {diags:?}")]
    InvalidGraph { node: String, diags: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    Send,
    Recv,
    Emit,
    State,
}

impl fmt::Display for TraceEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceEventKind::Send => "send",
            TraceEventKind::Recv => "recv",
            TraceEventKind::Emit => "emit",
            TraceEventKind::State => "state",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub tick: u64,
    pub node: String,
    pub op: NodeId,
    pub kind: TraceEventKind,
    pub payload: String,
}

/// An ordered event log; replaying a run with the same seeds reproduces it
/// byte for byte.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(
                f,
                "tick={} node={} op=n{} ev={} payload={}",
                e.tick, e.node, e.op, e.kind, e.payload
            )?;
        }
        Ok(())
    }
}

/// Seed resolution for channels: explicit per-channel overrides win, then a
/// base net seed mixed with the channel name, then the declared seed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tick_limit: Option<u64>,
    pub net_seed: Option<u64>,
    pub channel_seeds: BTreeMap<String, u64>,
    /// Event collection costs time on bulk fuzz sweeps; outputs and final
    /// states are unaffected by turning it off.
    pub collect_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tick_limit: None,
            net_seed: None,
            channel_seeds: BTreeMap::new(),
            collect_trace: true,
        }
    }
}

impl RunConfig {
    pub fn with_net_seed(seed: u64) -> RunConfig {
        RunConfig { net_seed: Some(seed), ..RunConfig::default() }
    }

    pub fn quiet(seed: u64) -> RunConfig {
        RunConfig { net_seed: Some(seed), collect_trace: false, ..RunConfig::default() }
    }

    fn resolve_kind(&self, name: &str, kind: &ChannelKind) -> ChannelKind {
        match kind {
            ChannelKind::LocalOrdered => ChannelKind::LocalOrdered,
            ChannelKind::NetworkAdversarial(p) => {
                let seed = self
                    .channel_seeds
                    .get(name)
                    .copied()
                    .or_else(|| self.net_seed.map(|s| mix_name(s, name)))
                    .unwrap_or(p.seed);
                ChannelKind::NetworkAdversarial(AdversarialParams { seed, ..p.clone() })
            }
        }
    }
}

fn mix_name(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Per terminal channel, decoded payload records in arrival order.
    pub outputs: BTreeMap<String, Vec<Record>>,
    pub trace: Trace,
    /// Final lattice group_by states, per (node, operator).
    pub group_states: BTreeMap<(String, NodeId), KeyedLattice>,
    /// Pointwise map applications, per (node, operator).
    pub map_item_counts: BTreeMap<(String, NodeId), u64>,
    /// Delivery plans computed per cross-node channel.
    pub schedules: BTreeMap<String, Vec<crate::netsim::Schedule>>,
    pub ticks: u64,
}

struct NodeExec {
    name: String,
    graph: DataflowGraph,
    topo: Vec<NodeId>,
    /// One local channel per graph edge, indexed like `graph.edges`.
    edge_channels: Vec<Channel<Record>>,
    /// Precomputed wiring per operator: (edge index, input port) feeding
    /// it, and (edge index, named output port) leaving it.
    in_wiring: BTreeMap<NodeId, Vec<(usize, usize)>>,
    out_wiring: BTreeMap<NodeId, Vec<(usize, Option<String>)>>,
    states: BTreeMap<NodeId, OpState>,
}

/// Wire form on cross-node channels: the canonical encoding of the tagged
/// record. The address rides inside the record as its `addr` attribute.
type CrossMsg = Vec<u8>;

pub struct Runtime<'a> {
    registry: &'a FunctionRegistry,
    nodes: Vec<NodeExec>,
    cross: BTreeMap<String, Channel<CrossMsg>>,
    consumers: BTreeMap<String, Vec<String>>,
    /// Pending messages per (node index, op) for serde sources.
    inboxes: BTreeMap<(usize, NodeId), Vec<CrossMsg>>,
    outputs: BTreeMap<String, Vec<Record>>,
    trace: Trace,
    collect_trace: bool,
    map_item_counts: BTreeMap<(String, NodeId), u64>,
    tick: u64,
    emissions_last_round: u64,
}

impl<'a> Runtime<'a> {
    pub fn new(
        deployment: &Deployment,
        scenario: &Scenario,
        registry: &'a FunctionRegistry,
        config: &RunConfig,
    ) -> Result<Runtime<'a>, RuntimeError> {
        deployment.validate()?;
        deployment.validate_fds(|relation| registry.stream_shape(relation).map(<[_]>::to_vec))?;
        let mut nodes = Vec::new();
        for (name, graph) in &deployment.nodes {
            let diags = graph.validate();
            if !diags.is_empty() {
                return Err(RuntimeError::InvalidGraph {
                    node: name.clone(),
                    diags: diags.iter().map(|d| d.to_string()).collect(),
                });
            }
            let topo = graph.topo_order().expect("validated acyclic");
            let mut states = BTreeMap::new();
            for op in graph.nodes() {
                states.insert(
                    op.id,
                    OpState::new(op, registry, |stream| {
                        let stream = deployment
                            .bindings
                            .get(stream)
                            .map(String::as_str)
                            .unwrap_or(stream);
                        scenario
                            .stream(stream)
                            .or_else(|| deployment.statics.get(stream).cloned())
                            .ok_or_else(|| RuntimeError::UnknownStream(stream.to_string()))
                    })?,
                );
            }
            let edge_channels = graph
                .edges
                .iter()
                .map(|_| Channel::new(ChannelKind::LocalOrdered))
                .collect();
            let mut in_wiring: BTreeMap<NodeId, Vec<(usize, usize)>> = BTreeMap::new();
            let mut out_wiring: BTreeMap<NodeId, Vec<(usize, Option<String>)>> = BTreeMap::new();
            for op in graph.nodes() {
                in_wiring.insert(op.id, Vec::new());
                out_wiring.insert(op.id, Vec::new());
            }
            for (idx, e) in graph.edges.iter().enumerate() {
                in_wiring.entry(e.to).or_default().push((idx, e.to_port));
                out_wiring.entry(e.from).or_default().push((idx, e.from_port.clone()));
            }
            nodes.push(NodeExec {
                name: name.clone(),
                graph: graph.clone(),
                topo,
                edge_channels,
                in_wiring,
                out_wiring,
                states,
            });
        }
        let mut cross = BTreeMap::new();
        let mut consumers = BTreeMap::new();
        for (name, decl) in &deployment.channels {
            cross.insert(
                name.clone(),
                Channel::new(config.resolve_kind(name, &decl.kind)),
            );
            consumers.insert(name.clone(), decl.consumers.clone());
        }
        Ok(Runtime {
            registry,
            nodes,
            cross,
            consumers,
            inboxes: BTreeMap::new(),
            outputs: BTreeMap::new(),
            trace: Trace::default(),
            collect_trace: config.collect_trace,
            map_item_counts: BTreeMap::new(),
            tick: 0,
            emissions_last_round: 0,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// All sources exhausted, all channels drained (duplicates included),
    /// nothing emitted in the last full round, and no fold output pending.
    pub fn is_quiescent(&self) -> bool {
        self.sources_exhausted()
            && self.channels_drained()
            && self.emissions_last_round == 0
            && !self.folds_pending()
    }

    fn sources_exhausted(&self) -> bool {
        self.nodes.iter().all(|n| n.states.values().all(OpState::source_exhausted))
    }

    fn channels_drained(&self) -> bool {
        self.cross.values().all(Channel::is_drained)
            && self
                .nodes
                .iter()
                .all(|n| n.edge_channels.iter().all(Channel::is_drained))
            && self.inboxes.values().all(Vec::is_empty)
    }

    fn folds_pending(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| n.states.values().any(OpState::fold_unflushed))
    }

    /// One full round: deliver cross-channel messages, then fire every node's
    /// operators in topological order.
    pub fn step_round(&mut self) -> Result<(), RuntimeError> {
        let tick = self.tick;
        self.emissions_last_round = 0;

        // Cross-channel deliveries scheduled for this tick, routed by the
        // message's addr tag; terminal channels collect outputs.
        let channel_names: Vec<String> = self.cross.keys().cloned().collect();
        for name in channel_names {
            let released = self.cross.get_mut(&name).unwrap().deliverable(tick);
            if released.is_empty() {
                continue;
            }
            let consumers = self.consumers[&name].clone();
            for bytes in released {
                if consumers.is_empty() {
                    let record = decode_output(&name, &bytes)?;
                    self.outputs.entry(name.clone()).or_default().push(record);
                    continue;
                }
                let addr = peek_addr(&bytes);
                let target = consumers
                    .iter()
                    .find(|c| Some(c.as_str()) == addr.as_deref())
                    .or_else(|| if consumers.len() == 1 { consumers.first() } else { None })
                    .cloned()
                    .ok_or_else(|| RuntimeError::TypeError {
                        node: addr.clone().unwrap_or_default(),
                        op: 0,
                        msg: format!("channel `{name}`: no consumer matches addr {addr:?}"),
                    })?;
                // Find the consuming serde source on the target node.
                let node_idx = self
                    .nodes
                    .iter()
                    .position(|n| n.name == target)
                    .expect("validated endpoint");
                let op = self.nodes[node_idx]
                    .graph
                    .nodes()
                    .find(|o| {
                        o.kind == OperatorKind::SourceStreamSerde
                            && o.first_ident() == Some(name.as_str())
                    })
                    .expect("validated endpoint")
                    .id;
                self.inboxes.entry((node_idx, op)).or_default().push(bytes);
            }
        }

        // Fire operators node by node.
        for node_idx in 0..self.nodes.len() {
            let topo = self.nodes[node_idx].topo.clone();
            for op_id in topo {
                self.fire(node_idx, op_id)?;
            }
        }
        self.tick += 1;
        Ok(())
    }

    fn fire(&mut self, node_idx: usize, op_id: NodeId) -> Result<(), RuntimeError> {
        let tick = self.tick;
        // Skip operators with nothing pending; most rounds touch only a
        // handful of operators.
        {
            let node = &self.nodes[node_idx];
            let state = &node.states[&op_id];
            let has_edge_input = node.in_wiring[&op_id]
                .iter()
                .any(|&(idx, _)| node.edge_channels[idx].next_pending_tick().is_some_and(|t| t <= tick));
            let kind = node.graph.node(op_id).expect("topo order node").kind;
            let idle = !has_edge_input
                && state.source_exhausted()
                && !matches!(state, OpState::GroupFold { flush_requested: true, flushed: false, .. })
                && !(kind == OperatorKind::SourceStreamSerde
                    && self.inboxes.get(&(node_idx, op_id)).is_some_and(|v| !v.is_empty()));
            if idle {
                return Ok(());
            }
        }
        let node_name = self.nodes[node_idx].name.clone();
        let op = self.nodes[node_idx]
            .graph
            .node(op_id)
            .expect("topo order node")
            .clone();

        // Assemble per-port input batches from the incoming edge channels.
        let in_ports = op.kind.input_ports().max(1);
        let mut inputs: Vec<Vec<Record>> = vec![Vec::new(); in_ports];
        let wiring = self.nodes[node_idx].in_wiring[&op_id].clone();
        for (edge_idx, port) in wiring {
            let batch = self.nodes[node_idx].edge_channels[edge_idx].deliverable(tick);
            inputs[port.min(in_ports - 1)].extend(batch);
        }

        let mut emitted: Vec<(Option<String>, Record)> = Vec::new();
        match op.kind {
            OperatorKind::SourceIter | OperatorKind::SourceStream => {
                let state = self.nodes[node_idx].states.get_mut(&op_id).unwrap();
                for record in state.source_batch(op.kind) {
                    emitted.push((None, record));
                }
            }
            OperatorKind::SourceStreamSerde => {
                let inbox = self.inboxes.entry((node_idx, op_id)).or_default();
                let pending: Vec<CrossMsg> = std::mem::take(inbox);
                for bytes in pending {
                    let text = String::from_utf8(bytes).map_err(|e| RuntimeError::TypeError {
                        node: node_name.clone(),
                        op: op_id,
                        msg: format!("message is not utf-8: {e}"),
                    })?;
                    let record = decode_record(&text).map_err(|e| RuntimeError::TypeError {
                        node: node_name.clone(),
                        op: op_id,
                        msg: format!("bad message encoding: {e}"),
                    })?;
                    if self.collect_trace {
                        self.trace.events.push(TraceEvent {
                            tick,
                            node: node_name.clone(),
                            op: op_id,
                            kind: TraceEventKind::Recv,
                            payload: text,
                        });
                    }
                    emitted.push((None, record));
                }
            }
            OperatorKind::DestSinkSerde => {
                let channel = op.first_ident().unwrap_or_default().to_string();
                for record in inputs.into_iter().flatten() {
                    if record.get("addr").is_none() {
                        return Err(RuntimeError::TypeError {
                            node: node_name.clone(),
                            op: op_id,
                            msg: format!("sink input lacks an addr attribute: {record}"),
                        });
                    }
                    let text = record.encode();
                    if self.collect_trace {
                        self.trace.events.push(TraceEvent {
                            tick,
                            node: node_name.clone(),
                            op: op_id,
                            kind: TraceEventKind::Send,
                            payload: text.clone(),
                        });
                    }
                    self.cross
                        .get_mut(&channel)
                        .expect("validated channel")
                        .enqueue(text.into_bytes(), tick);
                }
                return Ok(());
            }
            _ => {
                let state = self.nodes[node_idx].states.get_mut(&op_id).unwrap();
                let result =
                    step::step_with_events(&op, state, &inputs, self.registry, self.collect_trace)
                        .map_err(|e| e.contextualize(&node_name, op_id))?;
                if self.collect_trace {
                    for (key, point) in result.state_events {
                        self.trace.events.push(TraceEvent {
                            tick,
                            node: node_name.clone(),
                            op: op_id,
                            kind: TraceEventKind::State,
                            payload: format!("{key}=>{point}"),
                        });
                    }
                }
                if result.item_applications > 0 {
                    *self
                        .map_item_counts
                        .entry((node_name.clone(), op_id))
                        .or_default() += result.item_applications;
                }
                emitted = result.outputs;
            }
        }

        let fan_out_all = op.kind == OperatorKind::Tee;
        for (port, record) in emitted {
            if self.collect_trace {
                self.trace.events.push(TraceEvent {
                    tick,
                    node: node_name.clone(),
                    op: op_id,
                    kind: TraceEventKind::Emit,
                    payload: record.encode(),
                });
            }
            self.emissions_last_round += 1;
            let wiring: Vec<usize> = self.nodes[node_idx].out_wiring[&op_id]
                .iter()
                .filter(|(_, from_port)| fan_out_all || *from_port == port)
                .map(|(idx, _)| *idx)
                .collect();
            for edge_idx in wiring {
                self.nodes[node_idx].edge_channels[edge_idx].enqueue(record.clone(), tick);
            }
        }
        Ok(())
    }

    /// Runs to quiescence. Fold group_bys flush when the rest of the system
    /// has settled: quiescence is the operational end of time for finite
    /// scenarios.
    pub fn run(&mut self, tick_limit: u64) -> Result<(), RuntimeError> {
        loop {
            if self.tick > tick_limit {
                return Err(RuntimeError::TickLimitExceeded(tick_limit));
            }
            self.step_round()?;
            if self.sources_exhausted()
                && self.channels_drained()
                && self.emissions_last_round == 0
            {
                // Settled: release one layer of fold outputs, or finish.
                let mut any = false;
                for node in &mut self.nodes {
                    for state in node.states.values_mut() {
                        any |= state.request_fold_flush();
                    }
                }
                if !any {
                    return Ok(());
                }
            }
        }
    }

    pub fn into_output(self) -> RunOutput {
        let mut group_states = BTreeMap::new();
        for node in &self.nodes {
            for (&op_id, state) in &node.states {
                if let Some(k) = state.keyed_lattice() {
                    group_states.insert((node.name.clone(), op_id), k.clone());
                }
            }
        }
        let schedules = self
            .cross
            .iter()
            .map(|(name, ch)| (name.clone(), ch.schedules().to_vec()))
            .collect();
        RunOutput {
            outputs: self.outputs,
            trace: self.trace,
            group_states,
            map_item_counts: self.map_item_counts,
            schedules,
            ticks: self.tick,
        }
    }
}

fn peek_addr(bytes: &[u8]) -> Option<String> {
    let text = std::str::from_utf8(bytes).ok()?;
    match decode_record(text).ok()?.get("addr") {
        Some(Value::Str(s)) => Some(s.clone()),
        _ => None,
    }
}

fn decode_output(channel: &str, bytes: &[u8]) -> Result<Record, RuntimeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| RuntimeError::TypeError {
        node: channel.to_string(),
        op: 0,
        msg: format!("output is not utf-8: {e}"),
    })?;
    let record = decode_record(text).map_err(|e| RuntimeError::TypeError {
        node: channel.to_string(),
        op: 0,
        msg: format!("bad output encoding: {e}"),
    })?;
    Ok(record.without("addr").map(|(r, _)| r).unwrap_or(record))
}

/// Executes a deployment against a scenario to quiescence.
pub fn run_deployment(
    deployment: &Deployment,
    scenario: &Scenario,
    registry: &FunctionRegistry,
    config: &RunConfig,
) -> Result<RunOutput, RuntimeError> {
    let mut rt = Runtime::new(deployment, scenario, registry, config)?;
    rt.run(config.tick_limit.unwrap_or(DEFAULT_TICK_LIMIT))?;
    Ok(rt.into_output())
}

#[cfg(test)]
mod tests;
