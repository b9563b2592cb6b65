//! Monotonicity classification and per-edge network-safety verdicts.

use std::collections::BTreeMap;

use crate::ir::{DataflowGraph, Deployment, NodeId, OperatorKind};
use crate::registry::FunctionRegistry;

use super::TransformError;

/// Algebraic class of one operator with respect to its input lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    /// Commutes with merge; distributes over incremental delivery.
    LatticeMorphism,
    /// Monotone accumulation (grows, never retracts); insensitive to
    /// batching, ordering and duplication.
    MonotoneLattice,
    /// Depends on arrival order or multiplicity.
    OrderDependent,
    Source,
    Sink,
}

/// Verdict for inserting a network edge at a given point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeVerdict {
    Safe,
    /// The operator signatures from the edge's consumer down to the first
    /// order-dependent operator.
    Unsafe { path: Vec<String> },
}

#[derive(Debug, Clone, Default)]
pub struct MonotonicityReport {
    /// (node, operator) -> class.
    pub op_classes: BTreeMap<(String, NodeId), OpClass>,
    /// (node, from, to) -> verdict for every local edge.
    pub edge_verdicts: BTreeMap<(String, NodeId, NodeId), EdgeVerdict>,
    /// Verdict for each declared channel, taken at its consumer sources.
    pub channel_verdicts: BTreeMap<String, EdgeVerdict>,
}

impl MonotonicityReport {
    pub fn edge(&self, node: &str, from: NodeId, to: NodeId) -> Option<&EdgeVerdict> {
        self.edge_verdicts.get(&(node.to_string(), from, to))
    }
}

pub(crate) fn classify_op(
    graph: &DataflowGraph,
    id: NodeId,
    registry: &FunctionRegistry,
) -> Result<OpClass, TransformError> {
    let op = graph.node(id).expect("node exists");
    Ok(match op.kind {
        k if k.is_source() => OpClass::Source,
        k if k.is_sink() => OpClass::Sink,
        OperatorKind::Map => {
            let name = op.first_ident().unwrap_or_default();
            let props = registry
                .props(name)
                .map_err(|_| TransformError::UnknownFunctionProperties(name.to_string()))?;
            if props.pure && props.morphism {
                OpClass::LatticeMorphism
            } else {
                OpClass::OrderDependent
            }
        }
        OperatorKind::Join | OperatorKind::CrossJoin => OpClass::LatticeMorphism,
        OperatorKind::Tee | OperatorKind::Merge => OpClass::LatticeMorphism,
        OperatorKind::Unique => OpClass::MonotoneLattice,
        OperatorKind::Odiff => OpClass::MonotoneLattice,
        OperatorKind::Append => OpClass::OrderDependent,
        OperatorKind::GroupBy => {
            let init = op.params[0].to_string();
            let step = op.params[1].to_string();
            if registry.is_lattice_group(&init, &step) {
                OpClass::MonotoneLattice
            } else {
                let props = registry
                    .props(&step)
                    .map_err(|_| TransformError::UnknownFunctionProperties(step.clone()))?;
                if props.commutative_fold {
                    OpClass::MonotoneLattice
                } else {
                    OpClass::OrderDependent
                }
            }
        }
        _ => OpClass::OrderDependent,
    })
}

/// Walks every downstream path from `start`; returns the path to the first
/// order-dependent operator, or None when all paths are lattice-safe.
fn first_unsafe_path(
    graph: &DataflowGraph,
    start: NodeId,
    classes: &BTreeMap<NodeId, OpClass>,
) -> Option<Vec<String>> {
    fn dfs(
        graph: &DataflowGraph,
        id: NodeId,
        classes: &BTreeMap<NodeId, OpClass>,
        path: &mut Vec<NodeId>,
    ) -> Option<Vec<NodeId>> {
        path.push(id);
        match classes[&id] {
            OpClass::OrderDependent => return Some(path.clone()),
            OpClass::Sink => {
                path.pop();
                return None;
            }
            _ => {}
        }
        for e in graph.out_edges(id) {
            if path.contains(&e.to) {
                continue;
            }
            if let Some(hit) = dfs(graph, e.to, classes, path) {
                return Some(hit);
            }
        }
        path.pop();
        None
    }
    let mut path = Vec::new();
    dfs(graph, start, classes, &mut path).map(|ids| {
        ids.iter()
            .map(|id| graph.node(*id).unwrap().signature())
            .collect()
    })
}

/// Classifies every operator and computes a Safe/Unsafe verdict for every
/// local edge and every channel: an edge is safe iff every operator on
/// every downstream path to a sink is a lattice morphism or a monotone
/// lattice accumulator.
pub fn analyze_monotonicity(
    deployment: &Deployment,
    registry: &FunctionRegistry,
) -> Result<MonotonicityReport, TransformError> {
    let mut report = MonotonicityReport::default();
    let mut per_node_classes: BTreeMap<String, BTreeMap<NodeId, OpClass>> = BTreeMap::new();
    for (node_name, graph) in &deployment.nodes {
        let mut classes = BTreeMap::new();
        for op in graph.nodes() {
            let class = classify_op(graph, op.id, registry)?;
            classes.insert(op.id, class);
            report.op_classes.insert((node_name.clone(), op.id), class);
        }
        for edge in &graph.edges {
            let verdict = match first_unsafe_path(graph, edge.to, &classes) {
                None => EdgeVerdict::Safe,
                Some(path) => EdgeVerdict::Unsafe { path },
            };
            report
                .edge_verdicts
                .insert((node_name.clone(), edge.from, edge.to), verdict);
        }
        per_node_classes.insert(node_name.clone(), classes);
    }
    for (channel, decl) in &deployment.channels {
        let mut verdict = EdgeVerdict::Safe;
        for consumer in &decl.consumers {
            let graph = &deployment.nodes[consumer];
            let classes = &per_node_classes[consumer];
            for op in graph.nodes() {
                if op.kind == OperatorKind::SourceStreamSerde
                    && op.first_ident() == Some(channel.as_str())
                {
                    if let Some(path) = first_unsafe_path(graph, op.id, classes) {
                        verdict = EdgeVerdict::Unsafe { path };
                    }
                }
            }
        }
        report.channel_verdicts.insert(channel.clone(), verdict);
    }
    Ok(report)
}
