//! Local graph-to-graph rewrites: type upgrades, odiff/append insertion and
//! motion, group-by pushdown under a functional dependency, and redundant
//! sub-aggregation elision.

use crate::ir::{
    DataflowGraph, FunctionalDependency, NodeId, OperatorKind, Param,
};
use crate::registry::FunctionRegistry;

use super::analysis::{classify_op, OpClass};
use super::TransformError;

fn the_group_by(
    g: &DataflowGraph,
    rule: &str,
) -> Result<NodeId, TransformError> {
    match g.nodes_of_kind(OperatorKind::GroupBy)[..] {
        [id] => Ok(id),
        [] => Err(TransformError::precondition(rule, "no group_by in the graph")),
        _ => Err(TransformError::precondition(rule, "more than one group_by in the graph")),
    }
}

fn group_params(g: &DataflowGraph, id: NodeId) -> (String, String) {
    let op = g.node(id).unwrap();
    (op.params[0].to_string(), op.params[1].to_string())
}

fn retype_source(
    g: &mut DataflowGraph,
    rule: &str,
    target_suffix: &str,
) -> Result<(), TransformError> {
    let sources = g.nodes_of_kind(OperatorKind::SourceStream);
    let [source] = sources[..] else {
        return Err(TransformError::precondition(
            rule,
            format!("expected exactly one source_stream, found {}", sources.len()),
        ));
    };
    let name = g.node(source).unwrap().first_ident().unwrap_or_default().to_string();
    let base = name.trim_end_matches("_bp").trim_end_matches("_ssiv");
    let retyped = format!("{base}{target_suffix}");
    if retyped == name {
        return Err(TransformError::precondition(
            rule,
            format!("source `{name}` already emits the target lattice"),
        ));
    }
    g.node_mut(source).unwrap().params[0] = Param::Ident(retyped);
    Ok(())
}

/// Upgrades the sequence-append fold to the bounded-prefix lattice: the
/// source is re-bound to its prefix-emitting variant and the group_by's
/// fold pair becomes (bp_bot, bp_merge). Everything else is untouched.
pub fn upgrade_to_bp(
    g: &DataflowGraph,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "upgrade_to_bp";
    let mut out = g.clone();
    let gb = the_group_by(&out, RULE)?;
    let (init, step) = group_params(&out, gb);
    if registry.is_lattice_group(&init, &step) {
        return Err(TransformError::precondition(
            RULE,
            format!("group_by({init}, {step}) is already lattice-typed"),
        ));
    }
    retype_source(&mut out, RULE, "_bp")?;
    out.node_mut(gb).unwrap().params =
        vec![Param::ident("bp_bot"), Param::ident("bp_merge")];
    Ok(out)
}

/// Upgrades either the fold or the bounded-prefix flow to the sealed set of
/// indexed values.
pub fn upgrade_to_ssiv(
    g: &DataflowGraph,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "upgrade_to_ssiv";
    let mut out = g.clone();
    let gb = the_group_by(&out, RULE)?;
    let (init, step) = group_params(&out, gb);
    if init == "ssiv_bot" {
        return Err(TransformError::precondition(RULE, "already sealed-set typed"));
    }
    if registry.is_lattice_group(&init, &step) && init != "bp_bot" {
        return Err(TransformError::precondition(
            RULE,
            format!("cannot upgrade group_by({init}, {step})"),
        ));
    }
    retype_source(&mut out, RULE, "_ssiv")?;
    out.node_mut(gb).unwrap().params =
        vec![Param::ident("ssiv_bot"), Param::ident("ssiv_merge")];
    Ok(out)
}

/// True when the producer demonstrably emits bounded-prefix payloads:
/// itself a bp producer, or a payload-preserving operator whose inputs all
/// do.
fn carries_bp(g: &DataflowGraph, id: NodeId, registry: &FunctionRegistry) -> bool {
    let op = g.node(id).unwrap();
    match op.kind {
        OperatorKind::SourceStream => {
            op.first_ident().is_some_and(|n| n.ends_with("_bp"))
        }
        OperatorKind::GroupBy => op.params[0].to_string() == "bp_bot",
        OperatorKind::Append => true,
        OperatorKind::Tee | OperatorKind::Merge | OperatorKind::Unique => {
            let ins = g.in_edges(id);
            !ins.is_empty() && ins.iter().all(|e| carries_bp(g, e.from, registry))
        }
        OperatorKind::Map => {
            let pointwise = op
                .first_ident()
                .and_then(|n| registry.props(n).ok())
                .is_some_and(|p| p.pointwise);
            pointwise && g.in_edges(id).iter().all(|e| carries_bp(g, e.from, registry))
        }
        _ => false,
    }
}

/// Rewrites the segment `P -> Q` as `P -> odiff -> append -> Q`, exploiting
/// the edge's ordered exactly-once delivery to ship per-item deltas instead
/// of whole prefixes.
pub fn insert_odiff_append(
    g: &DataflowGraph,
    from: NodeId,
    to: NodeId,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "insert_odiff_append";
    let mut out = g.clone();
    let edge = out
        .edges
        .iter()
        .find(|e| e.from == from && e.to == to)
        .cloned()
        .ok_or_else(|| TransformError::precondition(RULE, format!("no edge {from}->{to}")))?;
    if !carries_bp(&out, from, registry) {
        return Err(TransformError::precondition(
            RULE,
            "cannot establish that the edge carries bounded-prefix points",
        ));
    }
    out.remove_edge(from, to);
    let odiff = out.add_node(OperatorKind::Odiff, vec![]);
    let append = out.add_node(OperatorKind::Append, vec![]);
    out.add_edge(from, edge.from_port.clone(), odiff, 0);
    out.add_edge(odiff, None, append, 0);
    out.add_edge(append, None, to, edge.to_port);
    Ok(out)
}

/// Moves a pointwise map from after `append` to between `odiff` and
/// `append`, so the per-item work happens once per item instead of once per
/// prefix element occurrence. All edges between odiff and append are local
/// intra-graph edges, which is exactly what the pair requires.
pub fn push_through_odiff(
    g: &DataflowGraph,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "push_through_odiff";
    let mut out = g.clone();
    // Pattern: odiff -> append -> map(f) with f pointwise.
    for odiff in out.nodes_of_kind(OperatorKind::Odiff) {
        let Some(append_edge) = out
            .out_edges(odiff)
            .into_iter()
            .find(|e| out.node(e.to).unwrap().kind == OperatorKind::Append)
            .cloned()
        else {
            continue;
        };
        let append = append_edge.to;
        let Some(map_edge) = out
            .out_edges(append)
            .into_iter()
            .find(|e| out.node(e.to).unwrap().kind == OperatorKind::Map)
            .cloned()
        else {
            continue;
        };
        let map = map_edge.to;
        let fn_name = out.node(map).unwrap().first_ident().unwrap_or_default().to_string();
        let props = registry
            .props(&fn_name)
            .map_err(|_| TransformError::UnknownFunctionProperties(fn_name.clone()))?;
        if !props.pointwise {
            return Err(TransformError::precondition(
                RULE,
                format!("map({fn_name}) is not declared pointwise over items"),
            ));
        }
        // odiff -> map -> append -> (map's old consumers)
        let map_outs: Vec<_> = out.out_edges(map).into_iter().cloned().collect();
        out.remove_edge(odiff, append);
        out.remove_edge(append, map);
        for e in &map_outs {
            out.remove_edge(map, e.to);
        }
        out.add_edge(odiff, None, map, 0);
        out.add_edge(map, None, append, 0);
        for e in map_outs {
            out.add_edge(append, e.from_port, e.to, e.to_port);
        }
        return Ok(out);
    }
    Err(TransformError::precondition(RULE, "no odiff -> append -> pointwise map segment"))
}

/// Deletes an append that feeds a lattice group_by performing the same
/// reassembly. The group_by absorbs the indexed deltas directly, so a
/// bounded-prefix group becomes a sealed-set group.
pub fn fuse_append(
    g: &DataflowGraph,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "fuse_append";
    let mut out = g.clone();
    for append in out.nodes_of_kind(OperatorKind::Append) {
        let outs: Vec<_> = out.out_edges(append).into_iter().cloned().collect();
        let [ref to_gb] = outs[..] else { continue };
        let gb = to_gb.to;
        if out.node(gb).unwrap().kind != OperatorKind::GroupBy {
            continue;
        }
        let (init, step) = group_params(&out, gb);
        if !registry.is_lattice_group(&init, &step) {
            return Err(TransformError::precondition(
                RULE,
                "the downstream group_by does not merge lattice points",
            ));
        }
        let ins: Vec<_> = out.in_edges(append).into_iter().cloned().collect();
        let [ref in_edge] = ins[..] else {
            return Err(TransformError::precondition(RULE, "append has no single feeder"));
        };
        out.remove_node(append);
        out.add_edge(in_edge.from, in_edge.from_port.clone(), gb, to_gb.to_port);
        // The group now reassembles indexed deltas itself.
        out.node_mut(gb).unwrap().params =
            vec![Param::ident("ssiv_bot"), Param::ident("ssiv_merge")];
        return Ok(out);
    }
    Err(TransformError::precondition(RULE, "no append feeding a lattice group_by"))
}

/// Infers the attribute shape on the edge into `id`'s given port by walking
/// producers: sources have declared shapes, maps apply their declared shape
/// transforms, joins concatenate key + both payloads.
fn shape_into(
    g: &DataflowGraph,
    id: NodeId,
    port: usize,
    registry: &FunctionRegistry,
) -> Option<Vec<String>> {
    let edge = g.edges.iter().find(|e| e.to == id && e.to_port == port)?;
    shape_out_of(g, edge.from, registry)
}

fn shape_out_of(
    g: &DataflowGraph,
    id: NodeId,
    registry: &FunctionRegistry,
) -> Option<Vec<String>> {
    let op = g.node(id)?;
    match op.kind {
        OperatorKind::SourceIter | OperatorKind::SourceStream => {
            let name = op.first_ident()?;
            let base = name.trim_end_matches("_bp").trim_end_matches("_ssiv");
            registry
                .stream_shape(name)
                .or_else(|| registry.stream_shape(base))
                .map(|s| s.to_vec())
        }
        OperatorKind::Map => {
            let input = shape_into(g, id, 0, registry)?;
            let entry = registry.get(op.first_ident()?).ok()?;
            entry.shape.map(|f| f(&input))
        }
        OperatorKind::GroupBy | OperatorKind::Unique | OperatorKind::Merge
        | OperatorKind::Tee | OperatorKind::Odiff | OperatorKind::Append => {
            shape_into(g, id, 0, registry)
        }
        OperatorKind::Join => {
            let left = shape_into(g, id, 0, registry)?;
            let right = shape_into(g, id, 1, registry)?;
            let (lkey, lpayload) = left.split_at(left.len() - 1);
            let (rkey, rpayload) = right.split_at(right.len() - 1);
            if lkey != rkey {
                return None;
            }
            let mut out = lkey.to_vec();
            out.push(lpayload[0].clone());
            out.push(rpayload[0].clone());
            Some(out)
        }
        _ => None,
    }
}

/// Pushes the group_by through the join under a functional dependency
/// `join_key -> dependent`: since the dependent attributes are determined
/// by the join key, grouping by (join_key, dependent) after the join equals
/// grouping by join_key before it. The group_by relocates onto the join's
/// stream input; the rearranging map stays put and now formats sealed
/// carts.
pub fn push_groupby_through_join(
    g: &DataflowGraph,
    fd: &FunctionalDependency,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "push_groupby_through_join";
    let mut out = g.clone();
    let gb = the_group_by(&out, RULE)?;
    let (init, step) = group_params(&out, gb);
    if !registry.is_lattice_group(&init, &step) {
        return Err(TransformError::precondition(
            RULE,
            "only lattice group_bys can move across the join",
        ));
    }
    // Pattern: join -> map -> group_by.
    let gb_in: Vec<_> = out.in_edges(gb).into_iter().cloned().collect();
    let [ref map_edge] = gb_in[..] else {
        return Err(TransformError::precondition(RULE, "group_by has no single feeder"));
    };
    let map = map_edge.from;
    if out.node(map).unwrap().kind != OperatorKind::Map {
        return Err(TransformError::precondition(RULE, "no rearranging map before group_by"));
    }
    let map_in: Vec<_> = out.in_edges(map).into_iter().cloned().collect();
    let [ref join_edge] = map_in[..] else {
        return Err(TransformError::precondition(RULE, "rearranging map has no single feeder"));
    };
    let join = join_edge.from;
    if out.node(join).unwrap().kind != OperatorKind::Join {
        return Err(TransformError::precondition(RULE, "group_by is not downstream of a join"));
    }

    // Key check: group key must be (join key, fd.dependent) with
    // fd.determinant equal to the join key, on the stream relation.
    let stream_shape = shape_into(&out, join, 0, registry).ok_or_else(|| {
        TransformError::precondition(RULE, "cannot infer the join's stream-side shape")
    })?;
    let join_key = stream_shape[..stream_shape.len() - 1].to_vec();
    let grouped_shape = shape_into(&out, gb, 0, registry).ok_or_else(|| {
        TransformError::precondition(RULE, "cannot infer the group_by input shape")
    })?;
    let group_key = grouped_shape[..grouped_shape.len() - 1].to_vec();

    // The dependency must hold on the join's lookup side: the relation
    // whose rows carry the dependent attribute.
    let table_edge = out
        .edges
        .iter()
        .find(|e| e.to == join && e.to_port == 1)
        .ok_or_else(|| TransformError::precondition(RULE, "join port 1 is unfed"))?;
    let relation = out
        .node(table_edge.from)
        .and_then(|n| n.kind.is_source().then(|| n.first_ident()).flatten())
        .unwrap_or_default()
        .to_string();
    if fd.relation != relation || fd.determinant != join_key {
        return Err(TransformError::MissingFd {
            rule: RULE.to_string(),
            needed: format!("{relation}: {} -> dependent attributes", join_key.join(",")),
        });
    }
    let mut expected_key = join_key.clone();
    expected_key.extend(fd.dependent.iter().cloned());
    if group_key != expected_key {
        return Err(TransformError::KeyMismatch {
            rule: RULE.to_string(),
            reason: format!(
                "group key ({}) is not join key plus dependent ({})",
                group_key.join(","),
                expected_key.join(",")
            ),
        });
    }

    // Rewrite: unplug the group_by and replant it on the join's port-0
    // feeder edge.
    let gb_outs: Vec<_> = out.out_edges(gb).into_iter().cloned().collect();
    out.remove_edge(map, gb);
    for e in &gb_outs {
        out.remove_edge(gb, e.to);
        out.add_edge(map, None, e.to, e.to_port);
    }
    let stream_edge = out
        .edges
        .iter()
        .find(|e| e.to == join && e.to_port == 0)
        .cloned()
        .ok_or_else(|| TransformError::precondition(RULE, "join port 0 is unfed"))?;
    out.remove_edge(stream_edge.from, join);
    out.add_edge(stream_edge.from, stream_edge.from_port.clone(), gb, 0);
    out.add_edge(gb, None, join, 0);
    Ok(out)
}

/// Removes the upstream of two equivalent lattice group_bys when only
/// morphism operators separate them: the downstream group merges raw inputs
/// just as well, making the sub-aggregation a pure optimization.
pub fn elide_subaggregation(
    g: &DataflowGraph,
    registry: &FunctionRegistry,
) -> Result<DataflowGraph, TransformError> {
    const RULE: &str = "elide_subaggregation";
    let mut out = g.clone();
    let gbs = out.nodes_of_kind(OperatorKind::GroupBy);
    let lattice_gbs: Vec<NodeId> = gbs
        .into_iter()
        .filter(|&id| {
            let (init, step) = group_params(&out, id);
            registry.is_lattice_group(&init, &step)
        })
        .collect();
    let [first, second] = lattice_gbs[..] else {
        return Err(TransformError::precondition(
            RULE,
            format!("need exactly two lattice group_bys, found {}", lattice_gbs.len()),
        ));
    };
    // Orient: upstream one reaches the downstream one.
    let (up, down) = if out.downstream_of(first).contains(&second) {
        (first, second)
    } else if out.downstream_of(second).contains(&first) {
        (second, first)
    } else {
        return Err(TransformError::precondition(RULE, "the two group_bys are not in sequence"));
    };
    if group_params(&out, up) != group_params(&out, down) {
        return Err(TransformError::precondition(RULE, "group_bys use different merges"));
    }
    // Every path from `up` must reach `down` (or exit at a sink) through
    // lattice morphisms only.
    let mut reaches_down = false;
    let mut stack: Vec<Vec<NodeId>> =
        out.out_edges(up).iter().map(|e| vec![e.to]).collect();
    while let Some(path) = stack.pop() {
        let cur = *path.last().unwrap();
        if cur == down {
            reaches_down = true;
            continue;
        }
        match classify_op(&out, cur, registry)? {
            OpClass::Sink => continue,
            OpClass::LatticeMorphism => {}
            other => {
                return Err(TransformError::precondition(
                    RULE,
                    format!(
                        "non-morphism {} ({other:?}) between the group_bys",
                        out.node(cur).unwrap().signature()
                    ),
                ))
            }
        }
        for e in out.out_edges(cur) {
            if path.contains(&e.to) {
                continue;
            }
            let mut next = path.clone();
            next.push(e.to);
            stack.push(next);
        }
    }
    if !reaches_down {
        return Err(TransformError::precondition(RULE, "no path reaches the downstream group_by"));
    }
    let ins: Vec<_> = out.in_edges(up).into_iter().cloned().collect();
    let outs: Vec<_> = out.out_edges(up).into_iter().cloned().collect();
    let [ref in_edge] = ins[..] else {
        return Err(TransformError::precondition(RULE, "upstream group_by has no single feeder"));
    };
    out.remove_node(up);
    for e in outs {
        out.add_edge(in_edge.from, in_edge.from_port.clone(), e.to, e.to_port);
    }
    Ok(out)
}
