//! Server replication with broadcast: k copies of the stateful node, each
//! teeing its looked-up carts onto a broadcast channel fanned out to every
//! replica (via a cartesian product with the membership list), merging
//! remote updates into a second lattice group, and suppressing redundant
//! sends with unique.

use crate::ir::{ChannelDecl, Deployment, NodeId, OperatorKind, Param};
use crate::netsim::{AdversarialParams, ChannelKind};
use crate::registry::FunctionRegistry;
use crate::value::{Record, Value};

use super::analysis::{classify_op, OpClass};
use super::TransformError;

#[derive(Debug, Clone)]
pub struct ReplicateOptions {
    /// Seed for the static client -> replica assignment.
    pub assign_seed: i64,
    pub broadcast_channel: String,
    pub params: AdversarialParams,
}

impl Default for ReplicateOptions {
    fn default() -> Self {
        ReplicateOptions {
            assign_seed: 0,
            broadcast_channel: "broadcast".to_string(),
            params: AdversarialParams::default(),
        }
    }
}

/// Replaces `node` with `replicas` copies (named `node1`..`nodek`), each
/// extended with the broadcast flow. Client requests are routed to one
/// replica by a seeded static assignment; every replica converges because
/// its state is entirely lattice group_by state.
pub fn replicate_with_broadcast(
    d: &Deployment,
    node: &str,
    replicas: u32,
    opts: &ReplicateOptions,
    registry: &FunctionRegistry,
) -> Result<Deployment, TransformError> {
    const RULE: &str = "replicate_with_broadcast";
    if replicas == 0 {
        return Err(TransformError::precondition(RULE, "need at least one replica"));
    }
    let graph = d
        .nodes
        .get(node)
        .ok_or_else(|| TransformError::precondition(RULE, format!("no node `{node}`")))?;

    // Replication precondition: no order-dependent state on the node.
    for op in graph.nodes() {
        if classify_op(graph, op.id, registry)? == OpClass::OrderDependent {
            return Err(TransformError::precondition(
                RULE,
                format!(
                    "{} is order-dependent; its state cannot be replicated",
                    op.signature()
                ),
            ));
        }
    }

    // Locate the output tail: fmt map -> tag map -> terminal sink.
    let terminal: Vec<NodeId> = graph
        .nodes_of_kind(OperatorKind::DestSinkSerde)
        .into_iter()
        .filter(|&id| {
            graph
                .node(id)
                .unwrap()
                .first_ident()
                .and_then(|ch| d.channels.get(ch))
                .is_some_and(|decl| decl.consumers.is_empty())
        })
        .collect();
    let [sink] = terminal[..] else {
        return Err(TransformError::precondition(
            RULE,
            format!("need exactly one terminal sink, found {}", terminal.len()),
        ));
    };
    let tag = feeder_of_kind(graph, sink, OperatorKind::Map, RULE, "address-tagging map")?;
    let fmt = feeder_of_kind(graph, tag, OperatorKind::Map, RULE, "formatting map")?;
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
    let gb_params = graph.node(gb).unwrap().params.clone();

    // Build the replica graph once; replicas are identical.
    let mut replica = graph.clone();
    replica.remove_edge(fmt, tag);
    let tee = replica.add_node(OperatorKind::Tee, vec![]);
    let bcast_join = replica.add_node(OperatorKind::CrossJoin, vec![]);
    let addr_source = replica.add_node(
        OperatorKind::SourceStream,
        vec![Param::ident("server_addrs")],
    );
    let bcast_sink = replica.add_node(
        OperatorKind::DestSinkSerde,
        vec![Param::ident(&opts.broadcast_channel)],
    );
    let bcast_source = replica.add_node(
        OperatorKind::SourceStreamSerde,
        vec![Param::ident(&opts.broadcast_channel)],
    );
    let bcast_detag = replica.add_node(OperatorKind::Map, vec![Param::ident("detag")]);
    let all_in = replica.add_node(OperatorKind::Merge, vec![]);
    let merge_gb = replica.add_node(OperatorKind::GroupBy, gb_params);
    let dedup = replica.add_node(OperatorKind::Unique, vec![]);

    replica.add_edge(fmt, None, tee, 0);
    replica.add_edge(tee, Some("clients".to_string()), all_in, 0);
    replica.add_edge(tee, Some("broadcast".to_string()), bcast_join, 0);
    replica.add_edge(addr_source, None, bcast_join, 1);
    replica.add_edge(bcast_join, None, bcast_sink, 0);
    replica.add_edge(bcast_source, None, bcast_detag, 0);
    replica.add_edge(bcast_detag, None, all_in, 0);
    replica.add_edge(all_in, None, merge_gb, 0);
    replica.add_edge(merge_gb, None, dedup, 0);
    replica.add_edge(dedup, None, tag, 0);

    let replica_names: Vec<String> =
        (1..=replicas).map(|i| format!("{node}{i}")).collect();

    let mut out = Deployment::default();
    for name in &replica_names {
        if d.nodes.contains_key(name) {
            return Err(TransformError::precondition(
                RULE,
                format!("replica name `{name}` collides with an existing node"),
            ));
        }
        out.nodes.insert(name.clone(), replica.clone());
    }
    for (name, g) in &d.nodes {
        if name == node {
            continue;
        }
        let mut g = g.clone();
        // Rewire client routing: a static tag to the replicated node
        // becomes a seeded per-client assignment over the membership list.
        for map in g.nodes_of_kind(OperatorKind::Map) {
            let op = g.node(map).unwrap();
            if op.first_ident() == Some("tag_addr")
                && op.params.get(1).and_then(|p| p.as_ident()) == Some(node)
            {
                let mut params = vec![Param::ident("route_client"), Param::Int(opts.assign_seed)];
                params.extend(replica_names.iter().map(Param::ident));
                g.node_mut(map).unwrap().params = params;
            }
        }
        out.nodes.insert(name.clone(), g);
    }

    for (name, decl) in &d.channels {
        let remap = |endpoints: &[String]| -> Vec<String> {
            endpoints
                .iter()
                .flat_map(|n| {
                    if n == node {
                        replica_names.clone()
                    } else {
                        vec![n.clone()]
                    }
                })
                .collect()
        };
        out.channels.insert(
            name.clone(),
            ChannelDecl {
                producers: remap(&decl.producers),
                consumers: remap(&decl.consumers),
                kind: decl.kind.clone(),
            },
        );
    }
    out.channels.insert(
        opts.broadcast_channel.clone(),
        ChannelDecl {
            producers: replica_names.clone(),
            consumers: replica_names.clone(),
            kind: ChannelKind::NetworkAdversarial(opts.params.clone()),
        },
    );
    out.fds = d.fds.clone();
    out.statics = d.statics.clone();
    out.bindings = d.bindings.clone();
    out.statics.insert(
        "server_addrs".to_string(),
        replica_names
            .iter()
            .map(|n| Record::new(vec![("addr".into(), Value::str(n.clone()))]))
            .collect(),
    );
    Ok(out)
}

fn feeder_of_kind(
    graph: &crate::ir::DataflowGraph,
    id: NodeId,
    kind: OperatorKind,
    rule: &str,
    what: &str,
) -> Result<NodeId, TransformError> {
    let ins = graph.in_edges(id);
    let [edge] = ins[..] else {
        return Err(TransformError::precondition(rule, format!("no single feeder for {what}")));
    };
    let feeder = edge.from;
    if graph.node(feeder).unwrap().kind != kind {
        return Err(TransformError::precondition(
            rule,
            format!(
                "expected {what} of kind {kind}, found {}",
                graph.node(feeder).unwrap().signature()
            ),
        ));
    }
    Ok(feeder)
}
