//! Decoupling a flow across a network: replace a local edge with a
//! dest_sink_serde / source_stream_serde pair wired through a new
//! adversarial channel, splitting one node into two.

use std::collections::BTreeMap;

use crate::ir::{ChannelDecl, DataflowGraph, Deployment, NodeId, OperatorKind, Param};
use crate::netsim::{AdversarialParams, ChannelKind};
use crate::registry::FunctionRegistry;

use super::analysis::{analyze_monotonicity, EdgeVerdict};
use super::TransformError;

/// Where to cut relative to the (unique) lattice group_by: upstream keeps
/// the state on the server (stateless clients), downstream keeps it on the
/// client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutPlacement {
    Upstream,
    Downstream,
}

#[derive(Debug, Clone)]
pub struct CutOptions {
    pub channel: String,
    pub upstream_name: String,
    pub downstream_name: String,
    pub params: AdversarialParams,
}

impl CutOptions {
    pub fn for_placement(placement: CutPlacement) -> CutOptions {
        CutOptions {
            channel: match placement {
                CutPlacement::Upstream => "reqs".to_string(),
                CutPlacement::Downstream => "carts".to_string(),
            },
            upstream_name: "client".to_string(),
            downstream_name: "server".to_string(),
            params: AdversarialParams::default(),
        }
    }
}

/// Cuts the edge adjacent to the unique lattice group_by of a single-node
/// deployment: its incoming edge for [`CutPlacement::Upstream`], its
/// outgoing edge for [`CutPlacement::Downstream`].
pub fn cut_flow(
    d: &Deployment,
    placement: CutPlacement,
    opts: &CutOptions,
    registry: &FunctionRegistry,
) -> Result<Deployment, TransformError> {
    const RULE: &str = "cut_flow";
    let (node, graph) = single_node(d, RULE)?;
    let lattice_gbs: Vec<NodeId> = graph
        .nodes_of_kind(OperatorKind::GroupBy)
        .into_iter()
        .filter(|&id| {
            let op = graph.node(id).unwrap();
            registry.is_lattice_group(&op.params[0].to_string(), &op.params[1].to_string())
        })
        .collect();
    let [gb] = lattice_gbs[..] else {
        return Err(TransformError::precondition(
            RULE,
            format!("need exactly one lattice group_by, found {}", lattice_gbs.len()),
        ));
    };
    let edge = match placement {
        CutPlacement::Upstream => graph.in_edges(gb).first().map(|e| (e.from, e.to)),
        CutPlacement::Downstream => graph.out_edges(gb).first().map(|e| (e.from, e.to)),
    };
    let Some((from, to)) = edge else {
        return Err(TransformError::precondition(RULE, "group_by has no adjacent edge to cut"));
    };
    cut_flow_at(d, &node, from, to, opts, registry)
}

/// Cuts an explicit local edge after checking the safety analysis marks it
/// Safe.
pub fn cut_flow_at(
    d: &Deployment,
    node: &str,
    from: NodeId,
    to: NodeId,
    opts: &CutOptions,
    registry: &FunctionRegistry,
) -> Result<Deployment, TransformError> {
    let report = analyze_monotonicity(d, registry)?;
    match report.edge(node, from, to) {
        Some(EdgeVerdict::Safe) => {}
        Some(EdgeVerdict::Unsafe { path }) => {
            return Err(TransformError::UnsafeCut { path: path.clone() })
        }
        None => {
            return Err(TransformError::precondition(
                "cut_flow",
                format!("no edge {from}->{to} in node `{node}`"),
            ))
        }
    }
    force_cut_flow_at(d, node, from, to, opts)
}

/// The cut rewrite without the safety gate. Exists so the test suites can
/// demonstrate what goes wrong when an order-dependent flow is cut; real
/// scripts go through [`cut_flow_at`].
pub fn force_cut_flow_at(
    d: &Deployment,
    node: &str,
    from: NodeId,
    to: NodeId,
    opts: &CutOptions,
) -> Result<Deployment, TransformError> {
    const RULE: &str = "cut_flow";
    let graph = d
        .nodes
        .get(node)
        .ok_or_else(|| TransformError::precondition(RULE, format!("no node `{node}`")))?;
    let parallel: Vec<_> = graph.edges.iter().filter(|e| e.from == from && e.to == to).collect();
    let edge = match parallel[..] {
        [e] => e.clone(),
        [] => {
            return Err(TransformError::precondition(
                RULE,
                format!("no edge {from}->{to} in node `{node}`"),
            ))
        }
        _ => {
            return Err(TransformError::precondition(
                RULE,
                format!("parallel edges {from}->{to}; the cut point is ambiguous"),
            ))
        }
    };
    // The address-tagging map and its sink form one assembly; records below
    // the tag already carry their final address, so the cut goes above it.
    if graph.node(to).unwrap().kind == OperatorKind::DestSinkSerde {
        return Err(TransformError::precondition(
            RULE,
            "the edge into a sink is part of the sink assembly; cut above the tagging map",
        ));
    }

    // The cut must separate the graph into an upstream and a downstream
    // component.
    let mut cutgraph = graph.clone();
    cutgraph.remove_edge(from, to);
    let up_ids = undirected_component(&cutgraph, from);
    if up_ids.contains(&to) {
        return Err(TransformError::precondition(
            RULE,
            "the edge does not separate the flow (another path connects the two sides)",
        ));
    }

    // Split nodes, rebuilding ids per side.
    let mut upstream = DataflowGraph::new();
    let mut downstream = DataflowGraph::new();
    let mut id_map: BTreeMap<NodeId, (bool, NodeId)> = BTreeMap::new();
    for op in graph.nodes() {
        let in_up = up_ids.contains(&op.id);
        let target = if in_up { &mut upstream } else { &mut downstream };
        let new_id = target.add_node(op.kind, op.params.clone());
        id_map.insert(op.id, (in_up, new_id));
    }
    for e in &cutgraph.edges {
        let (fu, nf) = id_map[&e.from];
        let (tu, nt) = id_map[&e.to];
        debug_assert_eq!(fu, tu, "cut separates all remaining edges");
        let target = if fu { &mut upstream } else { &mut downstream };
        target.add_edge(nf, e.from_port.clone(), nt, e.to_port);
    }
    for (name, &(head, tail)) in &graph.bindings {
        if let (Some(&(hu, nh)), Some(&(tu, nt))) = (id_map.get(&head), id_map.get(&tail)) {
            if hu == tu {
                let target = if hu { &mut upstream } else { &mut downstream };
                target.bindings.insert(name.clone(), (nh, nt));
            }
        }
    }

    // Upstream side: tag with the downstream address and ship.
    let (_, new_from) = id_map[&from];
    let tag = upstream.add_node(
        OperatorKind::Map,
        vec![Param::ident("tag_addr"), Param::ident(&opts.downstream_name)],
    );
    let sink = upstream.add_node(
        OperatorKind::DestSinkSerde,
        vec![Param::ident(&opts.channel)],
    );
    upstream.add_edge(new_from, edge.from_port.clone(), tag, 0);
    upstream.add_edge(tag, None, sink, 0);

    // Downstream side: receive, strip the tag, feed the original consumer.
    let (_, new_to) = id_map[&to];
    let source = downstream.add_node(
        OperatorKind::SourceStreamSerde,
        vec![Param::ident(&opts.channel)],
    );
    let detag = downstream.add_node(OperatorKind::Map, vec![Param::ident("detag")]);
    downstream.add_edge(source, None, detag, 0);
    downstream.add_edge(detag, None, new_to, edge.to_port);

    // Reassemble the deployment: the split node is replaced by two, every
    // channel endpoint naming the old node is remapped to whichever side
    // holds its operator.
    let mut out = Deployment::default();
    for (name, g) in &d.nodes {
        if name != node {
            out.nodes.insert(name.clone(), g.clone());
        }
    }
    if out.nodes.contains_key(&opts.upstream_name) || out.nodes.contains_key(&opts.downstream_name)
    {
        return Err(TransformError::precondition(RULE, "cut node names collide"));
    }
    out.nodes.insert(opts.upstream_name.clone(), upstream);
    out.nodes.insert(opts.downstream_name.clone(), downstream);
    for (name, decl) in &d.channels {
        let remap = |endpoints: &[String], role_producer: bool| -> Vec<String> {
            endpoints
                .iter()
                .flat_map(|n| {
                    if n != node {
                        return vec![n.clone()];
                    }
                    // Which side holds the serde operator for this channel?
                    let wanted = if role_producer {
                        OperatorKind::DestSinkSerde
                    } else {
                        OperatorKind::SourceStreamSerde
                    };
                    let mut sides = Vec::new();
                    for (side_name, side_graph) in [
                        (&opts.upstream_name, &out.nodes[&opts.upstream_name]),
                        (&opts.downstream_name, &out.nodes[&opts.downstream_name]),
                    ] {
                        if side_graph
                            .nodes()
                            .any(|o| o.kind == wanted && o.first_ident() == Some(name.as_str()))
                        {
                            sides.push(side_name.clone());
                        }
                    }
                    sides
                })
                .collect()
        };
        out.channels.insert(
            name.clone(),
            ChannelDecl {
                producers: remap(&decl.producers, true),
                consumers: remap(&decl.consumers, false),
                kind: decl.kind.clone(),
            },
        );
    }
    out.channels.insert(
        opts.channel.clone(),
        ChannelDecl {
            producers: vec![opts.upstream_name.clone()],
            consumers: vec![opts.downstream_name.clone()],
            kind: ChannelKind::NetworkAdversarial(opts.params.clone()),
        },
    );
    out.fds = d.fds.clone();
    out.statics = d.statics.clone();
    out.bindings = d.bindings.clone();
    Ok(out)
}

fn single_node<'a>(
    d: &'a Deployment,
    rule: &str,
) -> Result<(String, &'a DataflowGraph), TransformError> {
    let mut it = d.nodes.iter();
    match (it.next(), it.next()) {
        (Some((name, g)), None) => Ok((name.clone(), g)),
        _ => Err(TransformError::precondition(rule, "expected a single-node deployment")),
    }
}

fn undirected_component(g: &DataflowGraph, start: NodeId) -> Vec<NodeId> {
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        for e in &g.edges {
            for next in [
                (e.from == id).then_some(e.to),
                (e.to == id).then_some(e.from),
            ]
            .into_iter()
            .flatten()
            {
                if !seen.contains(&next) {
                    seen.push(next);
                    stack.push(next);
                }
            }
        }
    }
    seen.sort_unstable();
    seen
}
